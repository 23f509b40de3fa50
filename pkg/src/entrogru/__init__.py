"""entrogru: entropy-map attention and channel-squeezed recurrent conv cells.

A from-scratch numeric stack (tensors with reverse-mode gradients), the
two-pass sliding-window entropy map with feature enhancement, squeezed /
convolutional / dense recurrent cells, an analytic parameter & MACs cost
model, and a desk-scale synthetic video-detection harness with a
placement-ablation runner.
"""

from .tensor import (ConvSpec, Tensor, avg_pool, concat, concat_channels,
                     conv2d, depthwise_separable, hadamard, relu, sigmoid,
                     tanh)
from .entropy import (entropy_from_counts, feature_enhance, histogram, ie_map,
                      local_mean_pairs, max_entropy_bits, morphological_open,
                      to_grayscale, unary_entropy, window_2d_entropy)
from .cells import (conv_gru_step, dense_gru_step, dense_lstm_step,
                    init_conv_gru, init_dense_gru, init_dense_lstm,
                    init_squeezed_gru, make_cell, run_sequence,
                    squeezed_gru_step)
from .cost import CellConfig, count_macs, count_params, variant_comparison_report
from .gradcheck import grad_check, run_standard_checks

__version__ = "0.1.0"
