//! `encode`: dump one image's encoding as a CSV raster.

use snnf_core::data::Dataset;
use snnf_core::encoders::{EncodedBatch, EncoderConfig, EncodingScheme};
use snnf_core::{Error, Result};

/// Per-step values of every pixel, `[T][C·H·W]`. Direct steps carry the analog
/// intensities; temporal steps carry spikes.
pub fn encode_image(data: &Dataset, index: usize, scheme: EncodingScheme, steps: usize, period: usize) -> Result<Vec<Vec<f64>>> {
    if index >= data.len() {
        return Err(Error::Index {
            index,
            len: data.len(),
        });
    }
    let (images, _) = data.batch(&[index])?;
    let mut config = EncoderConfig::new(scheme, steps);
    config.phase_period = period;
    let inner = images.numel();
    let rows = |t: &snnf_core::tensor::Tensor| -> Vec<Vec<f64>> { t.data().chunks(inner).map(<[f64]>::to_vec).collect() };
    Ok(match config.encode_batch(&images)? {
        EncodedBatch::Direct { images, steps } => vec![images.data().to_vec(); steps],
        EncodedBatch::Temporal { train } => rows(&train),
        EncodedBatch::Hybrid { direct, temporal } => {
            let mut out = vec![direct.data().to_vec()];
            out.extend(rows(&temporal));
            out
        }
    })
}

/// CSV with header `t,p0,p1,...`; `t` is one-based.
pub fn raster_csv(raster: &[Vec<f64>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let width = raster.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((0..width).map(|p| format!("p{p}")));
    w.write_record(&header).expect("in-memory csv");
    for (t, row) in raster.iter().enumerate() {
        let mut rec = vec![(t + 1).to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
}
