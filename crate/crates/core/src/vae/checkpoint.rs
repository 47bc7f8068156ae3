//! Model checkpoint file.
//!
//! ```text
//! LRVAE-CHECKPOINT 1\n
//! input_dim=32\n
//! latent_dim=8\n
//! encoder=32x64,64x64,64x16\n
//! decoder=8x64,64x64,64x32\n
//! param_count=14192\n
//! \n
//! <param_count × f64, little-endian>
//! ```
//!
//! Layer sizes are `in x out`. Parameters follow in declaration order: each
//! encoder layer (weights row-major `out × in`, then bias), each decoder layer
//! likewise, then the decoder log-variance vector.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{VaeError, VaeParams};
use crate::nn::Dense;

pub const CHECKPOINT_MAGIC: &str = "LRVAE-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn layer_list(layers: &[Dense]) -> String {
    layers
        .iter()
        .map(|l| format!("{}x{}", l.in_dim, l.out_dim))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn checkpoint_bytes(params: &VaeParams) -> Vec<u8> {
    let flat = params.to_flat();
    let mut out = format!(
        "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\ninput_dim={}\nlatent_dim={}\nencoder={}\ndecoder={}\nparam_count={}\n\n",
        params.input_dim,
        params.latent_dim,
        layer_list(&params.encoder_layers),
        layer_list(&params.decoder_layers),
        flat.len()
    )
    .into_bytes();
    out.reserve(flat.len() * 8);
    for v in flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_checkpoint(params: &VaeParams, path: &Path) -> Result<(), VaeError> {
    params.validate()?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&checkpoint_bytes(params))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<VaeParams, VaeError> {
    let f = std::fs::File::open(path).map_err(|e| VaeError::Io(format!("{}: {e}", path.display())))?;
    parse_checkpoint(BufReader::new(f))
}

fn parse_layers(spec: &str) -> Result<Vec<Dense>, VaeError> {
    spec.split(',')
        .map(|item| {
            let (a, b) = item
                .split_once('x')
                .ok_or_else(|| VaeError::Checkpoint(format!("bad layer size {item:?}")))?;
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| VaeError::Checkpoint(format!("bad layer size {item:?}")))
            };
            Ok(Dense::zeros(parse(a)?, parse(b)?))
        })
        .collect()
}

pub fn parse_checkpoint<R: Read>(reader: BufReader<R>) -> Result<VaeParams, VaeError> {
    let mut reader = reader;
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let expected_first = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
    if line.trim_end() != expected_first {
        return Err(VaeError::Checkpoint(format!("unrecognized header {:?}", line.trim_end())));
    }
    let (mut input_dim, mut latent_dim, mut count) = (None, None, None);
    let (mut encoder, mut decoder) = (None, None);
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(VaeError::Checkpoint("truncated header".into()));
        }
        let l = line.trim_end_matches('\n');
        if l.is_empty() {
            break;
        }
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| VaeError::Checkpoint(format!("bad header line {l:?}")))?;
        let num = || v.parse::<usize>().map_err(|_| VaeError::Checkpoint(format!("bad value for {k}")));
        match k {
            "input_dim" => input_dim = Some(num()?),
            "latent_dim" => latent_dim = Some(num()?),
            "param_count" => count = Some(num()?),
            "encoder" => encoder = Some(parse_layers(v)?),
            "decoder" => decoder = Some(parse_layers(v)?),
            other => return Err(VaeError::Checkpoint(format!("unknown header key {other:?}"))),
        }
    }
    let missing = |k: &str| VaeError::Checkpoint(format!("missing header key {k}"));
    let input_dim = input_dim.ok_or_else(|| missing("input_dim"))?;
    let mut params = VaeParams {
        encoder_layers: encoder.ok_or_else(|| missing("encoder"))?,
        decoder_layers: decoder.ok_or_else(|| missing("decoder"))?,
        decoder_logvar: vec![0.0; input_dim],
        latent_dim: latent_dim.ok_or_else(|| missing("latent_dim"))?,
        input_dim,
    };
    let count = count.ok_or_else(|| missing("param_count"))?;
    if count != params.param_count() {
        return Err(VaeError::Checkpoint(format!(
            "param_count {count} does not match layer sizes ({})",
            params.param_count()
        )));
    }
    let mut bytes = Vec::with_capacity(count * 8);
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(VaeError::Checkpoint(format!(
            "expected {} payload bytes, found {}",
            count * 8,
            bytes.len()
        )));
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    params.set_flat(&flat)?;
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut p = VaeParams::init(7, 3, &[5, 4], 11).unwrap();
        p.decoder_logvar[2] = -1.25;
        let bytes = checkpoint_bytes(&p);
        let q = parse_checkpoint(BufReader::new(&bytes[..])).unwrap();
        assert_eq!(checkpoint_bytes(&q), bytes);
        assert_eq!(p, q);
    }

    #[test]
    fn header_is_descriptive() {
        let p = VaeParams::init(4, 2, &[3], 0).unwrap();
        let bytes = checkpoint_bytes(&p);
        let text = String::from_utf8_lossy(&bytes[..80]);
        assert!(text.starts_with("LRVAE-CHECKPOINT 1\ninput_dim=4\nlatent_dim=2\nencoder=4x3,3x4\ndecoder=2x3,3x4\n"));
    }

    #[test]
    fn truncated_payload_rejected() {
        let p = VaeParams::init(4, 2, &[3], 0).unwrap();
        let bytes = checkpoint_bytes(&p);
        let err = parse_checkpoint(BufReader::new(&bytes[..bytes.len() - 3])).unwrap_err();
        assert!(matches!(err, VaeError::Checkpoint(_)));
    }

    #[test]
    fn missing_file_mentions_path() {
        let err = read_checkpoint(Path::new("/nonexistent/model.ckpt")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/model.ckpt"));
    }
}
