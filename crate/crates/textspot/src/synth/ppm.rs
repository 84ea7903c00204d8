use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::SynthError;
use crate::nn::Tensor;

/// Write a 3 x H x W tensor in [0, 1] as a binary PPM (P6, maxval 255).
pub fn write_ppm(path: &Path, image: &Tensor) -> Result<(), SynthError> {
    if image.shape.len() != 3 || image.shape[0] != 3 {
        return Err(SynthError::Format("image must be 3 x H x W".into()));
    }
    let (h, w) = (image.shape[1], image.shape[2]);
    let mut buf = Vec::with_capacity(3 * h * w + 32);
    buf.extend_from_slice(format!("P6\n{w} {h}\n255\n").as_bytes());
    for p in 0..h * w {
        for c in 0..3 {
            let v = image.data[c * h * w + p].clamp(0.0, 1.0);
            buf.push((v * 255.0).round() as u8);
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_ppm(path: &Path) -> Result<Tensor, SynthError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String, SynthError> {
        // Skip whitespace and `#` comments between header tokens.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(SynthError::Format("truncated PPM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token(&bytes)? != "P6" {
        return Err(SynthError::Format("not a P6 PPM".into()));
    }
    let w: usize = token(&bytes)?
        .parse()
        .map_err(|_| SynthError::Format("bad PPM width".into()))?;
    let h: usize = token(&bytes)?
        .parse()
        .map_err(|_| SynthError::Format("bad PPM height".into()))?;
    let maxval: usize = token(&bytes)?
        .parse()
        .map_err(|_| SynthError::Format("bad PPM maxval".into()))?;
    if maxval != 255 {
        return Err(SynthError::Format(format!("unsupported maxval {maxval}")));
    }
    pos += 1; // single whitespace after maxval
    if bytes.len() < pos + 3 * h * w {
        return Err(SynthError::Format("truncated PPM pixel data".into()));
    }
    let mut image = Tensor::zeros(&[3, h, w]);
    for p in 0..h * w {
        for c in 0..3 {
            image.data[c * h * w + p] = bytes[pos + 3 * p + c] as f64 / 255.0;
        }
    }
    Ok(image)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn round_trip_quantization_bound() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut image = Tensor::randn(&[3, 6, 9], 0.25, &mut rng);
        for v in &mut image.data {
            *v = (*v + 0.5).clamp(0.0, 1.0);
        }
        write_ppm(&path, &image).unwrap();
        let back = read_ppm(&path).unwrap();
        assert_eq!(back.shape, image.shape);
        for (a, b) in image.data.iter().zip(back.data.iter()) {
            assert!((a - b).abs() <= 1.0 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn rejects_non_ppm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ppm");
        std::fs::write(&path, b"P5\n1 1\n255\n\0").unwrap();
        assert!(read_ppm(&path).is_err());
    }
}
