"""Finite-field arithmetic, random linear network coding and LT codes."""
from . import gf256
from .lt import (
    IntegrityError,
    LtDecoder,
    LtSymbol,
    PeelResult,
    SolitonParams,
    c_band,
    ideal_soliton,
    lt_encode,
    lt_peel_decode,
    overhead_symbols,
    robust_soliton,
)
from .rlnc import FilePayload, RlncDecoder, RlncPacket, rlnc_encode, rlnc_ingest, rlnc_recombine

__all__ = [
    "gf256", "FilePayload", "RlncPacket", "RlncDecoder", "rlnc_encode", "rlnc_ingest",
    "rlnc_recombine", "SolitonParams", "LtSymbol", "LtDecoder", "PeelResult", "IntegrityError",
    "c_band", "ideal_soliton", "robust_soliton", "lt_encode", "lt_peel_decode", "overhead_symbols",
]
