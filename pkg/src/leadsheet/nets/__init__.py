from .arrangement import (
    ArrangementGenerator,
    ConditionedDiscriminator,
    ConditionEncoder,
    sample_arrangement_noise,
)
from .leadsheet import LeadSheetGenerator, NoiseBundle, PhraseDiscriminator, TemporalGenerator
from .stack import LayerStack
from .topology import FEATURE_INPUT_SHAPES, FEATURES
