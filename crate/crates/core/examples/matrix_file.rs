//! The ZSMX matrix file format: write, read, and the errors it reports.

use zsosr::datasets::{decode_matrix, encode_matrix, read_matrix, write_matrix};
use zsosr::ndcore::Matrix;

fn main() -> zsosr::Result<()> {
    let m = Matrix::from_rows(&[[1.0f32, 2.0, 3.0], [4.0, 5.0, 6.0]])?;
    let bytes = encode_matrix(&m);
    println!("2x3 f32 matrix encodes to {} bytes; header {:?}", bytes.len(), &bytes[..8]);
    assert_eq!(decode_matrix(&bytes)?, m);

    let path = std::env::temp_dir().join("zsosr-example.zsmx");
    write_matrix(&path, &m)?;
    assert_eq!(read_matrix(&path)?, m);

    let mut bad = bytes.clone();
    bad[0] = b'X';
    println!("corrupted magic: {}", decode_matrix(&bad).unwrap_err());
    println!("truncated: {}", decode_matrix(&bytes[..bytes.len() - 4]).unwrap_err());
    Ok(())
}
