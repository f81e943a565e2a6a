"""Layer tables for every generator, discriminator and encoder.

Row formats:
    ("transconv" | "conv", filters, kernel, stride, batchnorm, activation)
    ("concat", map_index)      skip connection from the condition encoder
    ("reshape", (H, W, C))
    ("dense", units, activation)
"""

FEATURES = ("chord-roll", "chroma-roll", "chroma-beats")

# (time, width) orientation of each feature as fed to the networks
FEATURE_INPUT_SHAPES = {
    "chord-roll": (48, 84),
    "chroma-roll": (48, 12),
    "chroma-beats": (4, 12),
}

ENCODER_CHANNELS = 16


def _t(filters, kernel, stride, act="relu"):
    return ("transconv", filters, kernel, stride, True, act)


def _c(filters, kernel, stride, bn=False):
    return ("conv", filters, kernel, stride, bn, "lrelu")


GENERATOR_ROWS = {
    "chord-roll": [
        _t(1024, (1, 1), (1, 1)),
        ("reshape", (2, 1, 512)),
        ("concat", 5),
        _t(512, (2, 1), (2, 1)),
        ("concat", 4),
        _t(256, (2, 1), (2, 1)),
        ("concat", 3),
        _t(256, (2, 1), (2, 1)),
        ("concat", 2),
        _t(128, (3, 1), (3, 1)),
        ("concat", 1),
        _t(64, (1, 7), (1, 1)),
        ("concat", 0),
        _t(1, (1, 12), (1, 12), "tanh"),
    ],
    "chroma-roll": [
        _t(1024, (1, 1), (1, 1)),
        _t(512, (1, 12), (1, 12)),
        ("concat", 5),
        _t(256, (2, 1), (2, 1)),
        ("concat", 4),
        _t(256, (2, 1), (2, 1)),
        ("concat", 3),
        _t(128, (2, 1), (2, 1)),
        ("concat", 2),
        _t(128, (2, 1), (2, 1)),
        ("concat", 1),
        _t(64, (3, 1), (3, 1)),
        ("concat", 0),
        _t(1, (1, 7), (1, 7), "tanh"),
    ],
    "chroma-beats": [
        _t(1024, (1, 1), (1, 1)),
        _t(512, (1, 12), (1, 12)),
        _t(256, (2, 1), (2, 1)),
        _t(256, (2, 1), (2, 1)),
        ("concat", 0),
        _t(128, (2, 1), (2, 1)),
        _t(128, (2, 1), (2, 1)),
        _t(64, (3, 1), (3, 1)),
        _t(1, (1, 7), (1, 7), "tanh"),
    ],
}

# Unconditional lead-sheet bar generator: the chord-roll trunk without skip rows.
BAR_GENERATOR_ROWS = [row for row in GENERATOR_ROWS["chord-roll"] if row[0] != "concat"]

DISCRIMINATOR_ROWS = {
    "chord-roll": [
        ("concat", 6),
        _c(128, (1, 12), (1, 12)),
        _c(128, (1, 7), (1, 7)),
        _c(128, (2, 1), (2, 1)),
        _c(128, (2, 1), (2, 1)),
        _c(256, (4, 1), (2, 1)),
        _c(512, (3, 1), (2, 1)),
        ("dense", 1024, "lrelu"),
        ("dense", 1, None),
    ],
    "chroma-roll": [
        _c(128, (1, 7), (1, 7)),
        ("concat", 0),
        _c(128, (3, 1), (3, 1)),
        ("concat", 1),
        _c(128, (2, 1), (2, 1)),
        ("concat", 2),
        _c(128, (2, 1), (2, 1)),
        ("concat", 3),
        _c(256, (2, 1), (2, 1)),
        ("concat", 4),
        _c(512, (2, 1), (2, 1)),
        ("concat", 5),
        ("dense", 1024, "lrelu"),
        ("dense", 1, None),
    ],
    "chroma-beats": [
        _c(128, (1, 7), (1, 7)),
        _c(128, (3, 1), (3, 1)),
        _c(128, (2, 1), (2, 1)),
        _c(128, (2, 1), (2, 1)),
        ("concat", 0),
        _c(256, (2, 1), (2, 1)),
        _c(512, (2, 1), (2, 1)),
        ("dense", 1024, "lrelu"),
        ("dense", 1, None),
    ],
}

ENCODER_ROWS = {
    "chord-roll": [
        _c(16, (1, 12), (1, 12), bn=True),
        _c(16, (1, 7), (1, 7), bn=True),
        _c(16, (3, 1), (3, 1), bn=True),
        _c(16, (2, 1), (2, 1), bn=True),
        _c(16, (2, 1), (2, 1), bn=True),
        _c(16, (2, 1), (2, 1), bn=True),
    ],
    # map 0 of the chroma-roll encoder is the raw input replicated to 16 channels
    "chroma-roll": [
        _c(16, (3, 1), (3, 1), bn=True),
        _c(16, (2, 1), (2, 1), bn=True),
        _c(16, (2, 1), (2, 1), bn=True),
        _c(16, (2, 1), (2, 1), bn=True),
        _c(16, (2, 1), (2, 1), bn=True),
    ],
    "chroma-beats": [],
}

# Lead-sheet phrase critic over (8 bars * 48 steps, 84 pitches, 2 tracks).
PHRASE_DISCRIMINATOR_ROWS = [
    _c(128, (1, 12), (1, 12)),
    _c(128, (1, 7), (1, 7)),
    _c(128, (3, 1), (3, 1)),
    _c(256, (4, 1), (4, 1)),
    _c(512, (4, 1), (4, 1)),
    _c(512, (8, 1), (8, 1)),
    ("dense", 1024, "lrelu"),
    ("dense", 1, None),
]
