"""
cnnpost: convolutional post-processing for block-coded images.

Usage:
    from cnnpost.data import QualityLevel, build_corpus
    from cnnpost.trainer import PRESETS, train
    from cnnpost.zoo import build_vrcnn

    corpus = build_corpus("images/", QualityLevel(37))
    params, history = train(corpus, build_vrcnn(), PRESETS["smoke"])
"""

__version__ = "0.1.0"
