"""Encrypted linear control over LWE ciphertexts."""

from .controller import (
    EncryptedController,
    LinearController,
    NonIntegerF,
    QuantizedController,
    Scales,
    encrypt_controller,
    quantize,
    realize_fir,
    realize_pid,
)
from .gsw import GswCiphertext, GswMatrix, decompose, delta_bound, encrypt_gsw, gadget, mat_mul_ct, mul
from .lwe import Ciphertext, Params, PlaintextRangeError, SecretKey, add, decrypt, encrypt, keygen
from .sim import Plant, run_encrypted, run_nominal, run_quantized
from .zq import ModRing, ShapeError, smod

__all__ = [
    "Ciphertext", "EncryptedController", "GswCiphertext", "GswMatrix", "LinearController", "ModRing",
    "NonIntegerF", "Params", "PlaintextRangeError", "Plant", "QuantizedController", "Scales", "SecretKey",
    "ShapeError", "add", "decompose", "decrypt", "delta_bound", "encrypt", "encrypt_controller",
    "encrypt_gsw", "gadget", "keygen", "mat_mul_ct", "mul", "quantize", "realize_fir", "realize_pid",
    "run_encrypted", "run_nominal", "run_quantized", "smod",
]
