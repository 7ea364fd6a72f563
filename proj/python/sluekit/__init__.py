"""Python surface of the speech-LLM toolkit core.

The compiled extension exposes the tagged-transcript codec, the evaluation
metrics (WER, NER micro/label F1, SA macro F1, SLUE score), pseudo-mel
feature synthesis with augmentation, and the adapter math.
"""

from sluekit._core import (  # noqa: F401
    EntitySpan,
    TaggedTranscript,
    PseudoMelConfig,
    adaptive_avg_pool,
    adapter_forward,
    close_marker,
    decode_tagged,
    encode_tagged,
    entity_tags,
    extract_pairs,
    mix_loss,
    ner_label_f1,
    ner_micro_f1,
    normalize_text,
    open_marker,
    pos_weights,
    sa_macro_f1,
    slue_score,
    spec_augment,
    speed_perturb,
    text_to_pseudo_mel,
    wer,
)

__all__ = [
    "EntitySpan",
    "TaggedTranscript",
    "PseudoMelConfig",
    "adaptive_avg_pool",
    "adapter_forward",
    "close_marker",
    "decode_tagged",
    "encode_tagged",
    "entity_tags",
    "extract_pairs",
    "mix_loss",
    "ner_label_f1",
    "ner_micro_f1",
    "normalize_text",
    "open_marker",
    "pos_weights",
    "sa_macro_f1",
    "slue_score",
    "spec_augment",
    "speed_perturb",
    "text_to_pseudo_mel",
    "wer",
]
