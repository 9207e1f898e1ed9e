//! Grayscale TIFF/PNG reading and writing.
//!
//! Integer samples are normalized by the bit-depth maximum (255 or 65535).
//! The format is chosen from the file extension: `.png` is PNG, everything
//! else is treated as TIFF.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use tiff::decoder::{Decoder as TiffDecoder, DecodingResult, Limits};
use tiff::encoder::{colortype, TiffEncoder};
use tiff::ColorType as TiffColor;

use super::{Image, RgbImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BitDepth {
    #[serde(rename = "8")]
    Eight,
    #[serde(rename = "16")]
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> f32 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn normalize_u8(data: &[u8]) -> Vec<f32> {
    data.iter().map(|&v| v as f32 / 255.0).collect()
}

fn normalize_u16(data: &[u16]) -> Vec<f32> {
    data.iter().map(|&v| v as f32 / 65535.0).collect()
}

fn quantize(v: f32, max: f32) -> u32 {
    (v * max).round() as u32
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    if is_png(path) {
        load_png(path, reader)
    } else {
        load_tiff(path, reader)
    }
}

fn decode_err(path: &Path, reason: impl ToString) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn load_tiff(path: &Path, reader: BufReader<File>) -> Result<Image> {
    let mut dec = TiffDecoder::new(reader)
        .map_err(|e| decode_err(path, e))?
        .with_limits(Limits::unlimited());
    let (w, h) = dec.dimensions().map_err(|e| decode_err(path, e))?;
    let color = dec.colortype().map_err(|e| decode_err(path, e))?;
    let depth = match color {
        TiffColor::Gray(d) => d,
        TiffColor::GrayA(_) => return Err(multi(path, 2)),
        TiffColor::RGB(_) | TiffColor::YCbCr(_) | TiffColor::Lab(_) => return Err(multi(path, 3)),
        TiffColor::RGBA(_) | TiffColor::CMYK(_) => return Err(multi(path, 4)),
        TiffColor::CMYKA(_) => return Err(multi(path, 5)),
        TiffColor::Multiband { num_samples, .. } => return Err(multi(path, num_samples as usize)),
        other => {
            return Err(decode_err(
                path,
                format!("unsupported color type {other:?}"),
            ))
        }
    };
    if depth != 8 && depth != 16 {
        return Err(Error::UnsupportedBitDepth {
            path: path.to_path_buf(),
            depth: depth as u32,
        });
    }
    let data = match dec.read_image().map_err(|e| decode_err(path, e))? {
        DecodingResult::U8(d) => normalize_u8(&d),
        DecodingResult::U16(d) => normalize_u16(&d),
        _ => {
            return Err(Error::UnsupportedBitDepth {
                path: path.to_path_buf(),
                depth: depth as u32,
            })
        }
    };
    Image::new(w as usize, h as usize, data)
}

fn multi(path: &Path, channels: usize) -> Error {
    Error::MultiChannel {
        path: path.to_path_buf(),
        channels,
    }
}

fn load_png(path: &Path, reader: BufReader<File>) -> Result<Image> {
    let mut dec = png::Decoder::new(reader);
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(|e| decode_err(path, e))?;
    let (color, depth) = {
        let info = reader.info();
        (info.color_type, info.bit_depth)
    };
    match color {
        png::ColorType::Grayscale => {}
        png::ColorType::GrayscaleAlpha => return Err(multi(path, 2)),
        png::ColorType::Rgb | png::ColorType::Indexed => return Err(multi(path, 3)),
        png::ColorType::Rgba => return Err(multi(path, 4)),
    }
    if !matches!(depth, png::BitDepth::Eight | png::BitDepth::Sixteen) {
        return Err(Error::UnsupportedBitDepth {
            path: path.to_path_buf(),
            depth: depth as u32,
        });
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| decode_err(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| decode_err(path, e))?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let line = frame.line_size;
    let mut data = Vec::with_capacity(w * h);
    for row in buf.chunks_exact(line).take(h) {
        match depth {
            png::BitDepth::Eight => data.extend(normalize_u8(&row[..w])),
            _ => data.extend(
                row[..2 * w]
                    .chunks_exact(2)
                    .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 / 65535.0),
            ),
        }
    }
    Image::new(w, h, data)
}

/// Writes `img` with each intensity stored as `round(v * (2^depth - 1))`.
pub fn save_image(img: &Image, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    let (w, h) = (img.width() as u32, img.height() as u32);
    let max = depth.max_value();
    let enc_err = |e: &dyn std::fmt::Display| Error::Encode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    if is_png(path) {
        let mut enc = png::Encoder::new(&mut writer, w, h);
        enc.set_color(png::ColorType::Grayscale);
        let bytes: Vec<u8> = match depth {
            BitDepth::Eight => {
                enc.set_depth(png::BitDepth::Eight);
                img.data().iter().map(|&v| quantize(v, max) as u8).collect()
            }
            BitDepth::Sixteen => {
                enc.set_depth(png::BitDepth::Sixteen);
                img.data()
                    .iter()
                    .flat_map(|&v| (quantize(v, max) as u16).to_be_bytes())
                    .collect()
            }
        };
        let mut png_writer = enc.write_header().map_err(|e| enc_err(&e))?;
        png_writer
            .write_image_data(&bytes)
            .map_err(|e| enc_err(&e))?;
        png_writer.finish().map_err(|e| enc_err(&e))?;
    } else {
        let mut enc = TiffEncoder::new(&mut writer).map_err(|e| enc_err(&e))?;
        match depth {
            BitDepth::Eight => {
                let data: Vec<u8> = img.data().iter().map(|&v| quantize(v, max) as u8).collect();
                enc.write_image::<colortype::Gray8>(w, h, &data)
            }
            BitDepth::Sixteen => {
                let data: Vec<u16> = img
                    .data()
                    .iter()
                    .map(|&v| quantize(v, max) as u16)
                    .collect();
                enc.write_image::<colortype::Gray16>(w, h, &data)
            }
        }
        .map_err(|e| enc_err(&e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Writes a 24-bit RGB PNG.
pub fn save_rgb_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    let enc_err = |e: png::EncodingError| Error::Encode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut enc = png::Encoder::new(&mut writer, img.width() as u32, img.height() as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let bytes: Vec<u8> = img.pixels().iter().flatten().copied().collect();
    let mut png_writer = enc.write_header().map_err(enc_err)?;
    png_writer.write_image_data(&bytes).map_err(enc_err)?;
    png_writer.finish().map_err(enc_err)?;
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    #[test]
    fn eight_bit_scaling() {
        let dir = tempdir().unwrap();
        for name in ["a.tiff", "a.png"] {
            let p = dir.path().join(name);
            let img = Image::new(3, 1, vec![1.0, 0.0, 128.0 / 255.0]).unwrap();
            save_image(&img, &p, BitDepth::Eight).unwrap();
            let back = load_image(&p).unwrap();
            assert_eq!(back.data()[0], 1.0);
            assert_eq!(back.data()[1], 0.0);
            assert!((back.data()[2] - 0.50196).abs() < 1e-5);
        }
    }

    #[test]
    fn sixteen_bit_rounding() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("half.tif");
        save_image(&Image::constant(1, 1, 0.5).unwrap(), &p, BitDepth::Sixteen).unwrap();
        let mut dec = TiffDecoder::new(BufReader::new(File::open(&p).unwrap())).unwrap();
        match dec.read_image().unwrap() {
            DecodingResult::U16(d) => assert_eq!(d, vec![32768]),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(load_image(&p).unwrap().data()[0], 32768.0 / 65535.0);
    }

    #[test]
    fn rejects_rgb_and_missing_files() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        let rgb = RgbImage::new(2, 1, vec![[1, 2, 3], [4, 5, 6]]).unwrap();
        save_rgb_png(&rgb, &p).unwrap();
        assert!(matches!(
            load_image(&p),
            Err(Error::MultiChannel { channels: 3, .. })
        ));

        let p = dir.path().join("rgb.tiff");
        {
            let mut f = BufWriter::new(File::create(&p).unwrap());
            let mut enc = TiffEncoder::new(&mut f).unwrap();
            enc.write_image::<colortype::RGB8>(1, 1, &[1, 2, 3])
                .unwrap();
        }
        assert!(matches!(
            load_image(&p),
            Err(Error::MultiChannel { channels: 3, .. })
        ));

        let p = dir.path().join("f32.tiff");
        {
            let mut f = BufWriter::new(File::create(&p).unwrap());
            let mut enc = TiffEncoder::new(&mut f).unwrap();
            enc.write_image::<colortype::Gray32Float>(1, 1, &[0.5])
                .unwrap();
        }
        assert!(matches!(
            load_image(&p),
            Err(Error::UnsupportedBitDepth { depth: 32, .. })
        ));

        assert!(matches!(
            load_image(dir.path().join("nope.tiff")),
            Err(Error::Io { .. })
        ));
        let junk = dir.path().join("junk.tiff");
        std::fs::write(&junk, b"not an image").unwrap();
        assert!(matches!(load_image(&junk), Err(Error::Decode { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn round_trip_within_half_step(
            data in proptest::collection::vec(0.0f32..=1.0, 12),
            png in any::<bool>(),
            sixteen in any::<bool>(),
        ) {
            let dir = tempdir().unwrap();
            let p = dir.path().join(if png { "x.png" } else { "x.tiff" });
            let depth = if sixteen { BitDepth::Sixteen } else { BitDepth::Eight };
            let img = Image::new(4, 3, data).unwrap();
            save_image(&img, &p, depth).unwrap();
            let back = load_image(&p).unwrap();
            prop_assert_eq!(back.dims(), (4, 3));
            let bound = 0.5 / depth.max_value() + 1e-7;
            for (a, b) in img.data().iter().zip(back.data()) {
                prop_assert!((a - b).abs() <= bound);
            }
        }
    }
}
