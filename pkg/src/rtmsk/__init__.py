"""Real-time musculoskeletal pipeline: IMU orientations and insole forces in,
joint angles, joint torques, muscle activations and latency telemetry out."""
from .calib import CalibrationSet, calibrate
from .dynamics import inverse_dynamics, rnea
from .ik import IKStage, JointState, solve_frame, track
from .model import ChainModel, forward_kinematics, load_model, model_from_dict
from .pipeline import PipelineConfig, load_config, run, run_logical, run_realtime, write_outputs
from .so import Sequencer, SOProblem, dispatch, solve_activation

__version__ = "0.1.0"

__all__ = [
    "CalibrationSet", "calibrate", "inverse_dynamics", "rnea", "IKStage", "JointState", "solve_frame",
    "track", "ChainModel", "forward_kinematics", "load_model", "model_from_dict", "PipelineConfig",
    "load_config", "run", "run_logical", "run_realtime", "write_outputs", "Sequencer", "SOProblem",
    "dispatch", "solve_activation",
]
