"""Sensing-assisted OFDM channel prediction: synthesis, model, harness."""

from .channel import (ArrayGeometry, CsiSample, OfdmGrid, PathParams, Scenario,
                      ScenarioConfig, comm_channel_freq, generate_dataset,
                      load_dataset, sample_scenario, sense_channel_freq,
                      steering_vector)
from .model import ModelConfig, SensingAssistedPredictor
from .params import ParamStore
from .preprocess import AntennaSlice, add_csi_noise, slice_antenna
from .tensor import Tensor
from .train import TrainConfig, apply_freeze_policy, evaluate, nmse_loss, train

__version__ = "0.1.0"
