"""Decoders: exact enumeration rules and the tensor-network estimate."""

from .exact import (DecodeResult, FailureRate, MP_BETA, TIE_TOL,
                    class_representatives, decode_mfe, decode_ml_exact,
                    decode_mp_exact, exact_failure_probability,
                    logical_failure_rate, wilson_interval)
from .tensor import (Node, TensorNetwork, UnsupportedLayoutError,
                     build_partition_network, contract_exact, contract_mps,
                     decode_tn)

__all__ = [
    "DecodeResult", "FailureRate", "MP_BETA", "TIE_TOL",
    "class_representatives", "decode_mfe", "decode_ml_exact",
    "decode_mp_exact", "exact_failure_probability",
    "logical_failure_rate", "wilson_interval",
    "Node", "TensorNetwork", "UnsupportedLayoutError",
    "build_partition_network", "contract_exact", "contract_mps", "decode_tn",
]
