"""Multi-class probability calibration: isotonic (FIR, NA-FIR, SCIR, IR-OvR) and scaling (TS, VS) maps."""
from .calibrators import fit, fit_ir_ovr, predict, predict_ir_ovr
from .core import (
    CalibrationDataset,
    CalibrationError,
    FittedCalibrator,
    logits_from_probs,
    probs_from_logits,
    validate_dataset,
)
from .flat_iso import NAFIRHyper, fit_fir, fit_nafir, predict_fir, predict_nafir
from .metrics import brier, conf_ece, consistency_pvalue, cw_ece, nll, reliability_table, tece
from .pava import IsotonicInstance, StepFunction, minmax_oracle, pava_fit, step_eval
from .scaling import fit_temperature, fit_vector_scaling, predict_scaled, ts_nll
from .scir import fit_scir, predict_scir
from .synth import SynthConfig, distort_temperature, gen_calibrated

__version__ = "0.1.0"
