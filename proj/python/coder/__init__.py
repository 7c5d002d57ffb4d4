"""Python access to the CODER toolkit.

Bundles are plain dicts whose ``features`` entry is a float32 numpy array.
Errors raised by the core surface as :class:`CoderError` with a ``code``
attribute such as ``"bad-magic"`` or ``"manifest"``.
"""

from ._core import (
    CoderError,
    adapt_logits,
    affinity,
    assemble_general_text_set,
    build_coder,
    evaluate,
    predict_zeroshot,
    read_bundle,
    stage1_logits,
    write_bundle,
)

__all__ = [
    "CoderError",
    "adapt_logits",
    "affinity",
    "assemble_general_text_set",
    "build_coder",
    "evaluate",
    "predict_zeroshot",
    "read_bundle",
    "stage1_logits",
    "write_bundle",
]
