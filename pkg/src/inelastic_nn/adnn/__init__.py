from . import core
from .core import Node, detach, grad, value_of, variable
from .nets import (
    ConfigError,
    Dense,
    Lstm,
    LstmSpec,
    NetSpec,
    ParamPack,
    fnn_forward,
    icnn_forward,
    load_checkpoint,
    lstm_step,
    positive_net_forward,
    save_checkpoint,
)
