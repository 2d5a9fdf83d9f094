//! Raster file I/O: grayscale PNG (8/16-bit), uncompressed single-strip TIFF
//! (8/16-bit and 32-bit float) and the `<image>.geo.json` metadata sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};
use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};

use crate::error::{Error, Result};
use crate::geo::GeoMeta;
use crate::raster::{GeoRaster, SampleDepth};

/// Sidecar path for an image: `dir/name.png` → `dir/name.geo.json`.
pub fn sidecar_path(image: &Path) -> PathBuf {
    let stem = image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    image.with_file_name(format!("{stem}.geo.json"))
}

pub fn read_sidecar(path: &Path) -> Result<GeoMeta> {
    let meta: GeoMeta = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    meta.validate()?;
    Ok(meta)
}

pub fn write_sidecar(meta: &GeoMeta, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(meta)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn unreadable(path: &Path, reason: impl ToString) -> Error {
    Error::InputUnreadable {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn is_tiff(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("tif") | Some("tiff")
    )
}

/// Read a raster and, when present, its sidecar metadata.
pub fn read_raster(path: &Path) -> Result<GeoRaster> {
    let raster = if is_tiff(path) {
        read_tiff(path)?
    } else {
        read_png(path)?
    };
    let sidecar = sidecar_path(path);
    Ok(if sidecar.exists() {
        raster.with_meta(read_sidecar(&sidecar)?)
    } else {
        raster
    })
}

fn read_png(path: &Path) -> Result<GeoRaster> {
    let img = image::open(path).map_err(|e| unreadable(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma16(buf) => GeoRaster::new(
            w,
            h,
            SampleDepth::U16,
            vec![buf.into_raw().into_iter().map(f32::from).collect()],
        ),
        DynamicImage::ImageLuma8(buf) => GeoRaster::from_u8(w, h, buf.as_raw()),
        other => GeoRaster::from_u8(w, h, other.to_luma8().as_raw()),
    }
}

fn read_tiff(path: &Path) -> Result<GeoRaster> {
    let file = File::open(path).map_err(|e| unreadable(path, e))?;
    let mut decoder = Decoder::new(BufReader::new(file)).map_err(|e| unreadable(path, e))?;
    let (w, h) = decoder.dimensions().map_err(|e| unreadable(path, e))?;
    let (w, h) = (w as usize, h as usize);
    let data = decoder.read_image().map_err(|e| unreadable(path, e))?;
    let (depth, samples): (SampleDepth, Vec<f32>) = match data {
        DecodingResult::U8(v) => (SampleDepth::U8, v.into_iter().map(f32::from).collect()),
        DecodingResult::U16(v) => (SampleDepth::U16, v.into_iter().map(f32::from).collect()),
        DecodingResult::F32(v) => (SampleDepth::F32, v),
        _ => return Err(unreadable(path, "unsupported TIFF sample format")),
    };
    if samples.len() != w * h {
        return Err(unreadable(path, "only single-band grayscale TIFF is supported"));
    }
    GeoRaster::new(w, h, depth, vec![samples])
}

/// Write the raster's single band and, if it carries metadata, its sidecar.
pub fn write_raster(raster: &GeoRaster, path: &Path) -> Result<()> {
    if raster.band_count() != 1 {
        return Err(Error::InvalidRaster(format!(
            "cannot write a {}-band raster to one file; extract a band first",
            raster.band_count()
        )));
    }
    if is_tiff(path) {
        write_tiff(raster, path)?;
    } else {
        write_png(raster, path)?;
    }
    if let Some(meta) = raster.meta() {
        write_sidecar(meta, &sidecar_path(path))?;
    }
    Ok(())
}

fn write_png(raster: &GeoRaster, path: &Path) -> Result<()> {
    let (w, h) = (raster.width() as u32, raster.height() as u32);
    let result = match raster.depth() {
        SampleDepth::U8 => ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raster.to_u8())
            .expect("buffer size matches")
            .save_with_format(path, image::ImageFormat::Png),
        SampleDepth::U16 => {
            let data: Vec<u16> = raster.band(0).iter().map(|v| *v as u16).collect();
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, data)
                .expect("buffer size matches")
                .save_with_format(path, image::ImageFormat::Png)
        }
        SampleDepth::F32 => {
            return Err(Error::InvalidRaster(
                "32-bit float rasters must be written as TIFF".into(),
            ))
        }
    };
    result.map_err(|e| Error::Io(std::io::Error::other(e)))
}

fn write_tiff(raster: &GeoRaster, path: &Path) -> Result<()> {
    let to_io = |e: tiff::TiffError| Error::Io(std::io::Error::other(e));
    let mut encoder = TiffEncoder::new(BufWriter::new(File::create(path)?)).map_err(to_io)?;
    let (w, h) = (raster.width() as u32, raster.height() as u32);
    match raster.depth() {
        SampleDepth::U8 => {
            let mut img = encoder.new_image::<colortype::Gray8>(w, h).map_err(to_io)?;
            img.rows_per_strip(h).map_err(to_io)?;
            img.write_data(&raster.to_u8()).map_err(to_io)
        }
        SampleDepth::U16 => {
            let data: Vec<u16> = raster.band(0).iter().map(|v| *v as u16).collect();
            let mut img = encoder.new_image::<colortype::Gray16>(w, h).map_err(to_io)?;
            img.rows_per_strip(h).map_err(to_io)?;
            img.write_data(&data).map_err(to_io)
        }
        SampleDepth::F32 => {
            let mut img = encoder.new_image::<colortype::Gray32Float>(w, h).map_err(to_io)?;
            img.rows_per_strip(h).map_err(to_io)?;
            img.write_data(raster.band(0)).map_err(to_io)
        }
    }
}
