mod common;

use common::*;
use lrsketch::harness::io::{decode, encode, matrix_files, read_matrix, read_matrix_dir, write_matrix, MAGIC};
use lrsketch::{DenseMatrix, Error};
use proptest::prelude::*;

fn bits(a: &DenseMatrix) -> Vec<u64> {
    a.as_slice().iter().map(|v| v.to_bits()).collect()
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn binary_round_trip_is_bit_exact(
        (r, c, data) in (0usize..6, 0usize..6).prop_flat_map(|(r, c)| (Just(r), Just(c), proptest::collection::vec(any::<f64>(), r * c)))
    ) {
        let a = DenseMatrix::from_vec(r, c, data).unwrap();
        let bytes = encode(&a);
        prop_assert_eq!(bytes.len(), 21 + 8 * r * c);
        prop_assert_eq!(&bytes[..5], &MAGIC[..]);
        let b = decode(&bytes).unwrap();
        prop_assert_eq!(b.shape(), (r, c));
        prop_assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn truncation_anywhere_is_detected(a in any_matrix(4, 4), cut in 0usize..1000) {
        let bytes = encode(&a);
        let cut = cut % bytes.len();
        prop_assert!(decode(&bytes[..cut]).is_err());
    }
}

#[test]
fn header_layout() {
    let a = DenseMatrix::from_rows(&[[1.5, -2.0, 0.25]]).unwrap();
    let bytes = encode(&a);
    assert_eq!(&bytes[..5], b"SKLB1");
    assert_eq!(u64::from_le_bytes(bytes[5..13].try_into().unwrap()), 1);
    assert_eq!(u64::from_le_bytes(bytes[13..21].try_into().unwrap()), 3);
    assert_eq!(f64::from_le_bytes(bytes[21..29].try_into().unwrap()), 1.5);
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(decode(&extra), Err(Error::Format(_))));
}

#[test]
fn files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let a = gaussian(3, 4, &mut rng(71));
    write_matrix(&dir.path().join("b.sklb"), &a).unwrap();
    std::fs::write(dir.path().join("a.csv"), "1, 2\n3 ,4\n").unwrap();
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let files = matrix_files(dir.path()).unwrap();
    let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_owned()).collect();
    assert_eq!(names, ["a.csv", "b.sklb"]);
    let all = read_matrix_dir(dir.path()).unwrap();
    assert_eq!(all[0], DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
    assert_eq!(bits(&all[1]), bits(&a));
    assert!(matches!(read_matrix(&dir.path().join("missing.sklb")), Err(Error::Io(_))));
    std::fs::write(dir.path().join("bad.csv"), "1,x\n").unwrap();
    assert!(matches!(read_matrix(&dir.path().join("bad.csv")), Err(Error::Format(_))));
}
