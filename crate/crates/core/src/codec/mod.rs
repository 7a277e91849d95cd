//! Weight quantization, entropy coding and the compressed-model container.

pub mod bitstream;
pub mod freq;
pub mod quant;
pub mod range_coder;

pub use bitstream::{
    decode_video, dequantize_store, encode_bitstream, encode_payload, estimate_rate, parse,
    quantize_store, serialize, BitstreamError, DecodeError, QuantizedModel, RateReport,
};
pub use freq::FreqTable;
pub use quant::{dequantize, fake_quantize, quantize_tensor, QuantizedTensor};
pub use range_coder::{arith_decode, arith_encode};
