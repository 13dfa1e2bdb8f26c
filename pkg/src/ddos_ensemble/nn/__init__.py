"""Small float64 layer library with hand-derived gradients."""
from .functional import (attention, batchnorm_forward, bce_grad, bce_loss, conv1d_forward,
                         dense_forward, global_avg_pool, lstm_cell_step, relu, self_attention,
                         sigmoid, softmax)
from .gradcheck import GradCheckReport, finite_diff_check
from .layers import (LSTM, BatchNorm, Conv1d, Dense, Flatten, GlobalAvgPool, Layer, ReLU,
                     SelfAttention, Sequential, SwapAxes, backward)
from .optim import AdamState, adam_step
from .params import (LayerParams, attention_params, batchnorm_params, conv1d_params,
                     dense_params, lstm_params)
