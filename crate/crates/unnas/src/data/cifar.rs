//! CIFAR-10 binary batch loader: 3073-byte records, one label byte followed
//! by 3072 pixel bytes (row-major R, G, B planes).

use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::autograd::Tensor;

use super::{Dataset, Error};

const HW: usize = 32;
const BYTES_PER_IMAGE: usize = 1 + 3 * HW * HW;

/// Load one or more binary batch files, keeping at most `limit` images in
/// file order.
pub fn load_cifar10<P: AsRef<Path>>(paths: &[P], limit: Option<usize>) -> Result<Dataset, Error> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    'files: for path in paths {
        let mut file = File::open(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        let mut buf = Vec::new();
        file.read_to_end(&mut buf)
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        if buf.len() % BYTES_PER_IMAGE != 0 {
            return Err(Error::Malformed {
                reason: format!(
                    "{}: {} bytes is not a multiple of the {BYTES_PER_IMAGE}-byte record",
                    path.as_ref().display(),
                    buf.len()
                ),
            });
        }
        for record in buf.chunks_exact(BYTES_PER_IMAGE) {
            let label = record[0] as usize;
            if label > 9 {
                return Err(Error::Malformed {
                    reason: format!("label byte {label} out of range"),
                });
            }
            let data: Vec<f32> = record[1..].iter().map(|&b| b as f32 / 255.0).collect();
            images.push(Tensor::new(vec![3, HW, HW], data).expect("record size fixed"));
            labels.push(label);
            if limit.is_some_and(|n| images.len() >= n) {
                break 'files;
            }
        }
    }
    Dataset::new(images, labels, 10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn loads_records_and_respects_limit() {
        let dir = std::env::temp_dir().join("unnas_cifar_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("batch.bin");
        let mut f = File::create(&path).unwrap();
        for i in 0..5u8 {
            let mut rec = vec![i % 10];
            rec.extend(std::iter::repeat(i * 10).take(3072));
            f.write_all(&rec).unwrap();
        }
        drop(f);
        let ds = load_cifar10(&[&path], Some(3)).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.hw(), 32);
        let v = ds.labeled_view(ds.all_indices());
        assert_eq!(v.label(2), 2);
        assert!((v.image(2).data()[0] - 20.0 / 255.0).abs() < 1e-6);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = std::env::temp_dir().join("unnas_cifar_test2");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.bin");
        std::fs::write(&path, vec![0u8; 100]).unwrap();
        assert!(matches!(
            load_cifar10(&[&path], None),
            Err(Error::Malformed { .. })
        ));
        std::fs::remove_file(&path).ok();
    }
}
