from strata.nn.layers import GruParams, bi_gru_encode, gru_cell, per_slice_encode, slice_encoder
from strata.nn.attention import (
    AttentionMap,
    GlobalAttentionParams,
    ToeplitzKernel,
    build_attention_map,
    global_attention_step,
    kernel_summary,
    toeplitz_attention,
)
from strata.nn.decoders import DecodeResult, Linear, decode_global, decode_toeplitz
from strata.nn.model import Model, ModelConfig, argmax_labels, attention_map, forward, predict

__all__ = [
    'AttentionMap', 'DecodeResult', 'GlobalAttentionParams', 'GruParams', 'Linear', 'Model', 'ModelConfig',
    'ToeplitzKernel', 'argmax_labels', 'attention_map', 'bi_gru_encode', 'build_attention_map',
    'decode_global', 'decode_toeplitz', 'forward', 'global_attention_step', 'gru_cell', 'kernel_summary',
    'per_slice_encode', 'predict', 'slice_encoder', 'toeplitz_attention',
]
