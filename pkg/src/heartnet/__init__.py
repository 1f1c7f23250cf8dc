"""Heart-sound classification from Welch spectra: MBDCN, LSCN and baselines."""

from .dataset import ClassLabel, AudioRecording, Segment, SplitPlan, load_manifest, make_split, segment_recording
from .dsp import FilterSpec, WelchConfig, PowerSpectrum, welch_psd, energy_normalize, make_input_tensor
from .evaluation import ConfusionMatrix, EvalReport, confusion, binary_metrics, multiclass_metrics, kappa
from .models import Model, build, build_mbdcn, build_lscn, build_cnn1d, build_mlp

__version__ = "0.1.0"
