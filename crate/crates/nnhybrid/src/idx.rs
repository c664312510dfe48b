//! IDX image and label files, the layout MNIST ships in: a big-endian
//! magic (`0x00000803` images, `0x00000801` labels), one big-endian `u32`
//! per dimension, then unsigned bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use nnhybrid_core::data::Dataset;
use nnhybrid_core::Tensor;

use crate::error::{io_err, Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

struct Header {
    dims: Vec<usize>,
    data_offset: u64,
    file_len: u64,
}

impl Header {
    fn count(&self) -> usize {
        self.dims[0]
    }

    fn row_len(&self) -> usize {
        self.dims[1..].iter().product()
    }
}

fn read_header(file: &mut File, path: &Path, magic: u32) -> Result<Header> {
    let file_len = file.metadata().map_err(io_err(path))?.len();
    if file_len < 4 {
        return Err(Error::Truncated { path: path.into(), expected: 4, actual: file_len });
    }
    let found = file.read_u32::<BigEndian>().map_err(io_err(path))?;
    if found != magic {
        return Err(Error::BadMagic { path: path.into(), expected: magic, found });
    }
    let ndims = (magic & 0xff) as usize;
    let header_len = 4 + 4 * ndims as u64;
    if file_len < header_len {
        return Err(Error::Truncated { path: path.into(), expected: header_len, actual: file_len });
    }
    let dims = (0..ndims)
        .map(|_| file.read_u32::<BigEndian>().map(|d| d as usize))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(io_err(path))?;
    let header = Header { dims, data_offset: header_len, file_len };
    let needed = header_len + (header.count() * header.row_len()) as u64;
    if file_len < needed {
        return Err(Error::Truncated { path: path.into(), expected: needed, actual: file_len });
    }
    Ok(header)
}

fn read_rows(file: &mut File, path: &Path, header: &Header, start: usize, count: usize) -> Result<Vec<u8>> {
    let row = header.row_len() as u64;
    let offset = header.data_offset + start as u64 * row;
    let len = count as u64 * row;
    if offset + len > header.file_len {
        return Err(Error::Truncated { path: path.into(), expected: offset + len, actual: header.file_len });
    }
    file.seek(SeekFrom::Start(offset)).map_err(io_err(path))?;
    let mut buf = vec![0u8; len as usize];
    BufReader::new(file).read_exact(&mut buf).map_err(io_err(path))?;
    Ok(buf)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(io_err(path))
}

/// Number of images in an IDX image file, from its header.
pub fn idx_count(image_path: &Path) -> Result<usize> {
    Ok(read_header(&mut open(image_path)?, image_path, IMAGE_MAGIC)?.count())
}

/// Loads the whole file pair as `[N, 1, rows, cols]` with pixels in `[0, 1]`.
pub fn load_idx(image_path: &Path, label_path: &Path) -> Result<Dataset> {
    load_idx_rows(image_path, label_path, 0, usize::MAX)
}

/// Loads `count` consecutive samples starting at `start` (clamped to the
/// end of the file). `class_count` is one more than the largest label read.
pub fn load_idx_rows(image_path: &Path, label_path: &Path, start: usize, count: usize) -> Result<Dataset> {
    let mut images = open(image_path)?;
    let mut labels = open(label_path)?;
    let ih = read_header(&mut images, image_path, IMAGE_MAGIC)?;
    let lh = read_header(&mut labels, label_path, LABEL_MAGIC)?;
    if ih.count() != lh.count() {
        return Err(Error::CountMismatch { images: ih.count(), labels: lh.count() });
    }
    let start = start.min(ih.count());
    let count = count.min(ih.count() - start);
    if count == 0 {
        return Err(Error::EmptyFile(image_path.into()));
    }
    let pixels = read_rows(&mut images, image_path, &ih, start, count)?;
    let raw_labels = read_rows(&mut labels, label_path, &lh, start, count)?;
    let features = Tensor::new(
        &[count, 1, ih.dims[1], ih.dims[2]],
        pixels.iter().map(|&p| p as f64 / 255.0).collect(),
    )?;
    let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    let class_count = labels.iter().max().map_or(1, |&m| m + 1);
    let name = image_path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    Ok(Dataset::new(name, features, labels, class_count)?)
}

/// Writes a single-channel image dataset whose pixels are multiples of
/// 1/255 in `[0, 1]`, so that loading it back is bit-exact.
pub fn write_idx(image_path: &Path, label_path: &Path, data: &Dataset) -> Result<()> {
    let shape = data.sample_shape();
    let (rows, cols) = match *shape {
        [1, r, c] | [r, c] => (r, c),
        _ => {
            return Err(nnhybrid_core::Error::InvalidParameter(format!(
                "IDX holds single-channel images, got samples of shape {shape:?}"
            ))
            .into())
        }
    };
    let mut bytes = Vec::with_capacity(data.features().len());
    for &v in data.features().data() {
        let b = (v * 255.0).round();
        if !(0.0..=255.0).contains(&b) || b / 255.0 != v {
            return Err(nnhybrid_core::Error::InvalidParameter(format!(
                "pixel {v} is not a multiple of 1/255 in [0, 1]"
            ))
            .into());
        }
        bytes.push(b as u8);
    }
    if let Some(&l) = data.labels().iter().find(|&&l| l > 255) {
        return Err(nnhybrid_core::Error::InvalidParameter(format!("label {l} does not fit in a byte")).into());
    }
    let n = data.len() as u32;

    let mut w = BufWriter::new(File::create(image_path).map_err(io_err(image_path))?);
    let write_images = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        w.write_u32::<BigEndian>(IMAGE_MAGIC)?;
        for d in [n, rows as u32, cols as u32] {
            w.write_u32::<BigEndian>(d)?;
        }
        w.write_all(&bytes)?;
        w.flush()
    };
    write_images(&mut w).map_err(io_err(image_path))?;

    let mut w = BufWriter::new(File::create(label_path).map_err(io_err(label_path))?);
    let write_labels = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        w.write_u32::<BigEndian>(LABEL_MAGIC)?;
        w.write_u32::<BigEndian>(n)?;
        w.write_all(&data.labels().iter().map(|&l| l as u8).collect::<Vec<_>>())?;
        w.flush()
    };
    write_labels(&mut w).map_err(io_err(label_path))
}
