"""dpdlab: a desk-scale digital predistortion laboratory.

Simulates a direct-conversion transmitter (DAC quantization, branch filter and
LO gain/phase mismatch, memory-polynomial PA with saturation and noise), and
identifies predistorters against it via the indirect learning architecture:
either a time-delay MLP with a trainable input/output shortcut and magnitude
pruning, or an extended parallel-Hammerstein model fitted by least squares.
Reports NMSE, ACPR, and per-sample FLOPs.
"""

from .hammerstein import (NumericalError, PhModel, PhShape, load_ph, ls_fit,
                          ph_basis, ph_fit, ph_flops, ph_model_flops, ph_predict, save_ph)
from .lab import (ExperimentConfig, MetricSpec, MetricsReport, NetShape, SignalSpec,
                  apply_model, evaluate_dpd, ila_identify, ila_run, load_experiment,
                  noise_floor_report, sweep)
from .network import (ArdenNetwork, LayerSpec, build_network, flops, flops_for_dims,
                      forward, load_network, predistort, realized_flops, save_network,
                      window_signal)
from .signals import (ComplexSignal, FirFilter, SpectrumConfig, acpr_dbc, fir_apply,
                      generate_multicarrier, load_csig, load_csv_signal, nmse_db,
                      save_csig, save_csv_signal, welch_psd)
from .textconfig import ConfigError
from .training import (AdamState, HistoryRow, PruneSchedule, TrainConfig, backprop_step,
                       gradients, live_flops, mse_loss, network_sparsity, prune_layer,
                       sparsity_at, train_with_pruning)
from .txsim import (DacModel, IqImbalanceConfig, PaSurrogate, TransmitterConfig,
                    dac_quantize, ideal_transmitter, iq_modulate, load_transmitter_config,
                    pa_apply, reference_transmitter, save_transmitter_config, transmit)

__version__ = "0.1.0"
