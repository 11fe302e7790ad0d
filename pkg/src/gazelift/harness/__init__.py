from .ablate import AblationResult, ablate, with_gaze_distance
from .evaluate import (baseline_fixed_bias, baseline_frontal_gaze, evaluate, evaluate_hypotheses,
                       sample_records)
from .report import EvalReport, SampleMetrics
from .train import TrainConfig, TrainResult, overfit_one_sample, train

__all__ = ["AblationResult", "EvalReport", "SampleMetrics", "TrainConfig", "TrainResult", "ablate",
           "baseline_fixed_bias", "baseline_frontal_gaze", "evaluate", "evaluate_hypotheses",
           "overfit_one_sample", "sample_records", "train", "with_gaze_distance"]
