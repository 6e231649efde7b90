//! Audio front end: WAV decoding, mel filterbanks and 20×20 MFCC maps.

mod features;
mod mfcc;
mod wav;

pub use features::{decode_features, encode_features, read_features, write_features};
pub use mfcc::{
    dct2, hann, hz_to_mel, mel_filterbank, mel_to_hz, mfcc, Hop, MelFilterbank, MfccConfig, MfccExtractor, MfccMap, MfccStandardizer,
    MFCC_COEFFS, MFCC_FRAMES,
};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav, WaveClip, WAV_SAMPLE_RATE};

use crate::error::Result;
use crate::par::{self, Execution};

/// Extracts unstandardized MFCC maps for many clips.
pub fn mfcc_batch(clips: &[WaveClip], config: &MfccConfig, exec: Execution) -> Result<Vec<MfccMap>> {
    let extractor = MfccExtractor::new(config.clone())?;
    par::map(exec, clips, |c| extractor.mfcc(c)).into_iter().collect()
}
