"""Labelled sub-seeds derived from one root seed.

``derive_seed(root, label)`` is the first 4 bytes (big-endian) of
``sha256(f"{root}:{label}")``, so every stochastic stage gets an independent
stream while the whole run stays controlled by a single number.
"""
from __future__ import annotations

import hashlib


def derive_seed(root: int, label: str) -> int:
    digest = hashlib.sha256(f"{int(root)}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


# stage labels; changing one changes that stage's randomness only
SPLIT = "split"
TUNING = "tuning"
EXTRACTOR_INIT = "extractor.init"
EXTRACTOR_SHUFFLE = "extractor.shuffle"
XGB_EXTRACTOR_INIT = "cnn_xgb.init"
XGB_EXTRACTOR_SHUFFLE = "cnn_xgb.shuffle"
RF_EXTRACTOR_INIT = "cnn_rf.init"
RF_EXTRACTOR_SHUFFLE = "cnn_rf.shuffle"
LSTM_INIT = "cnn_lstm.init"
LSTM_SHUFFLE = "cnn_lstm.shuffle"
FOREST = "cnn_rf.forest"
META = "meta"
