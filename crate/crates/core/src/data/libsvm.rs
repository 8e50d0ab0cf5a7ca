use crate::error::{LibsvmError, Result};
use crate::numerics::Matrix;

use super::Dataset;

/// Parses libsvm sparse text (`label idx:val idx:val ...`, 1-based strictly
/// increasing indices) into a dense dataset of `n_features` columns.
///
/// Labels are remapped to contiguous class indices in ascending order
/// (numeric order when every label parses as a number); the original label
/// strings are kept in `class_names`. Blank lines and `#` comments are skipped.
pub fn parse_libsvm(text: &str, n_features: usize, name: &str) -> Result<Dataset> {
    let mut raw_labels = Vec::new();
    let mut values = Vec::new();

    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label = tokens.next().expect("non-empty line has a token");
        raw_labels.push(label.to_string());

        let mut row = vec![0.0; n_features];
        let mut previous = 0usize;
        for token in tokens {
            let malformed = || LibsvmError::MalformedToken {
                line: line_no,
                token: token.to_string(),
            };
            let (idx, val) = token.split_once(':').ok_or_else(malformed)?;
            let idx: usize = idx.parse().map_err(|_| malformed())?;
            let val: f64 = val.parse().map_err(|_| malformed())?;
            if !val.is_finite() {
                return Err(malformed().into());
            }
            if idx == 0 || idx > n_features {
                return Err(LibsvmError::IndexOutOfRange {
                    line: line_no,
                    index: idx,
                    n_features,
                }
                .into());
            }
            if idx <= previous {
                return Err(LibsvmError::NonIncreasingIndex {
                    line: line_no,
                    index: idx,
                    previous,
                }
                .into());
            }
            row[idx - 1] = val;
            previous = idx;
        }
        values.extend(row);
    }

    let mut classes: Vec<String> = raw_labels.clone();
    let numeric = classes.iter().all(|l| l.parse::<f64>().is_ok());
    if numeric {
        classes.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    } else {
        classes.sort();
    }
    classes.dedup();
    let labels = raw_labels
        .iter()
        .map(|l| classes.iter().position(|c| c == l).expect("label was collected"))
        .collect();

    let inputs = Matrix::from_vec(raw_labels.len(), n_features, values)?;
    Dataset::new(name, inputs, Some(labels), classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn direct_read() {
        let d = parse_libsvm("2 1:1 4:1\n", 5, "t").unwrap();
        assert_eq!(d.inputs.row(0), &[1.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(d.class_names, vec!["2"]);
        assert_eq!(d.labels(), Some(&[0usize][..]));
    }

    #[test]
    fn empty_feature_list() {
        let d = parse_libsvm("3\n1 2:0.5\n", 3, "t").unwrap();
        assert_eq!(d.inputs.row(0), &[0.0, 0.0, 0.0]);
        assert_eq!(d.inputs.row(1), &[0.0, 0.5, 0.0]);
        assert_eq!(d.class_names, vec!["1", "3"]);
        assert_eq!(d.labels(), Some(&[1usize, 0][..]));
    }

    #[test]
    fn numeric_label_order() {
        let d = parse_libsvm("10 1:1\n9 1:1\n-1 1:1\n", 1, "t").unwrap();
        assert_eq!(d.class_names, vec!["-1", "9", "10"]);
        assert_eq!(d.labels(), Some(&[2usize, 1, 0][..]));
    }

    #[test]
    fn non_increasing_index() {
        let err = parse_libsvm("1 1:1\n1 3:1 2:1\n", 5, "t").unwrap_err();
        assert!(matches!(
            err,
            Error::Libsvm(LibsvmError::NonIncreasingIndex { line: 2, index: 2, previous: 3 })
        ));
    }

    #[test]
    fn out_of_range_and_malformed() {
        assert!(matches!(
            parse_libsvm("1 6:1\n", 5, "t").unwrap_err(),
            Error::Libsvm(LibsvmError::IndexOutOfRange { line: 1, index: 6, n_features: 5 })
        ));
        assert!(matches!(
            parse_libsvm("1 0:1\n", 5, "t").unwrap_err(),
            Error::Libsvm(LibsvmError::IndexOutOfRange { index: 0, .. })
        ));
        assert!(matches!(
            parse_libsvm("1 2:1\n\n1 2=1\n", 5, "t").unwrap_err(),
            Error::Libsvm(LibsvmError::MalformedToken { line: 3, .. })
        ));
        assert!(matches!(
            parse_libsvm("1 x:1\n", 5, "t").unwrap_err(),
            Error::Libsvm(LibsvmError::MalformedToken { .. })
        ));
    }

    #[test]
    fn sparse_and_dense_agree() {
        let sparse = parse_libsvm("1 2:1\n0 1:1 3:1\n", 3, "t").unwrap();
        let dense = parse_libsvm("1 1:0 2:1 3:0\n0 1:1 2:0 3:1\n", 3, "t").unwrap();
        assert_eq!(sparse, dense);
    }
}
