from .bow import BowModel, eligible_for_bow, extract_lat
from .common import AnswerPrediction, param_count
from .fastqa import FastQAModel, beam_search_decode
from .fusion import FastQAExtModel, FusionLayer

MODELS = {"bow": BowModel, "fastqa": FastQAModel, "fastqaext": FastQAExtModel}

__all__ = ["BowModel", "FastQAModel", "FastQAExtModel", "FusionLayer", "AnswerPrediction",
           "beam_search_decode", "eligible_for_bow", "extract_lat", "param_count", "MODELS"]
