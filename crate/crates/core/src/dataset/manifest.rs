use std::collections::HashSet;
use std::path::{Path, PathBuf};

use super::{DatasetManifest, ImageRecord, Split};
use crate::{Error, Result};

const IMAGE_EXTENSIONS: [&str; 6] = ["png", "jpg", "jpeg", "PNG", "JPG", "JPEG"];

/// Reads an APTOS-style `id_code,diagnosis` labels file and resolves each id
/// to `<image_dir>/<id_code>.<ext>`.
///
/// Records come back unassigned and sorted by id.
pub fn load_manifest(labels_file: &Path, image_dir: &Path, class_names: &[String]) -> Result<DatasetManifest> {
    let labels_err = |message: String| Error::LabelsFile { path: labels_file.to_path_buf(), message };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(labels_file)
        .map_err(|e| labels_err(e.to_string()))?;

    let headers = reader.headers().map_err(|e| labels_err(e.to_string()))?.clone();
    if headers.len() != 2 || &headers[0] != "id_code" || &headers[1] != "diagnosis" {
        return Err(labels_err(format!(
            "expected header `id_code,diagnosis`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let max_label = class_names.len().saturating_sub(1);
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::MalformedRow {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let id = row[0].to_string();
        if id.is_empty() {
            return Err(Error::MalformedRow { line, message: "empty id_code".into() });
        }
        let value: i64 = row[1].parse().map_err(|_| Error::MalformedRow {
            line,
            message: format!("diagnosis `{}` is not an integer", &row[1]),
        })?;
        if value < 0 || value as usize > max_label {
            return Err(Error::LabelOutOfRange { line, value, max: max_label });
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId { line, id });
        }
        let path = find_image(image_dir, &id)
            .ok_or_else(|| Error::MissingImage { id: id.clone(), dir: image_dir.to_path_buf() })?;
        records.push(ImageRecord { image_id: id, path, label: value as usize, split: Split::Unassigned });
    }

    DatasetManifest::from_records(records, class_names.to_vec())
}

fn find_image(dir: &Path, id: &str) -> Option<PathBuf> {
    IMAGE_EXTENSIONS.iter().map(|ext| dir.join(format!("{id}.{ext}"))).find(|p| p.is_file())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn fixture(rows: &[(&str, &str)]) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let mut csv = String::from("id_code,diagnosis\n");
        for (id, label) in rows {
            csv.push_str(&format!("{id},{label}\n"));
            fs::write(dir.path().join(format!("{id}.png")), b"").unwrap();
        }
        let labels = dir.path().join("train.csv");
        fs::write(&labels, csv).unwrap();
        (dir, labels)
    }

    fn names() -> Vec<String> {
        crate::default_class_names()
    }

    #[test]
    fn header_only_gives_empty_manifest() {
        let (dir, labels) = fixture(&[]);
        let m = load_manifest(&labels, dir.path(), &names()).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.class_counts, vec![0; 5]);
    }

    #[test]
    fn one_per_class() {
        let (dir, labels) = fixture(&[("e", "4"), ("a", "0"), ("b", "1"), ("c", "2"), ("d", "3")]);
        let m = load_manifest(&labels, dir.path(), &names()).unwrap();
        assert_eq!(m.class_counts, vec![1; 5]);
        assert_eq!(m.len(), 5);
        let ids: Vec<_> = m.records.iter().map(|r| r.image_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c", "d", "e"]);
        assert!(m.records.iter().all(|r| r.split == Split::Unassigned));
    }

    #[test]
    fn aptos_table_counts() {
        // Grades 0..=4: No DR, Mild, Moderate, Severe, Proliferate.
        let counts = [1805usize, 1624, 999, 834, 772];
        let dir = tempfile::tempdir().unwrap();
        let mut csv = String::from("id_code,diagnosis\n");
        for (label, &n) in counts.iter().enumerate() {
            for i in 0..n {
                let id = format!("img{label}_{i:04}");
                csv.push_str(&format!("{id},{label}\n"));
                fs::write(dir.path().join(format!("{id}.jpg")), b"").unwrap();
            }
        }
        let labels = dir.path().join("train.csv");
        fs::write(&labels, csv).unwrap();
        let m = load_manifest(&labels, dir.path(), &names()).unwrap();
        assert_eq!(m.class_counts, counts.to_vec());
        assert_eq!(m.len(), 6034);
    }

    #[test]
    fn missing_image_names_the_id() {
        let (dir, labels) = fixture(&[("a", "0")]);
        fs::remove_file(dir.path().join("a.png")).unwrap();
        let err = load_manifest(&labels, dir.path(), &names()).unwrap_err();
        assert!(matches!(&err, Error::MissingImage { id, .. } if id == "a"), "{err}");
    }

    #[test]
    fn out_of_range_label() {
        let (dir, labels) = fixture(&[("a", "5")]);
        let err = load_manifest(&labels, dir.path(), &names()).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { value: 5, line: 2, .. }), "{err}");
        let (dir, labels) = fixture(&[("a", "-1")]);
        assert!(matches!(load_manifest(&labels, dir.path(), &names()), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn duplicate_id() {
        let (dir, labels) = fixture(&[("a", "0"), ("a", "1")]);
        let err = load_manifest(&labels, dir.path(), &names()).unwrap_err();
        assert!(matches!(err, Error::DuplicateId { line: 3, .. }), "{err}");
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let (dir, labels) = fixture(&[("a", "0")]);
        fs::write(&labels, "id_code,diagnosis\na,0\nb,1,extra\n").unwrap();
        let err = load_manifest(&labels, dir.path(), &names()).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 3, .. }), "{err}");

        fs::write(&labels, "id_code,diagnosis\na,zero\n").unwrap();
        let err = load_manifest(&labels, dir.path(), &names()).unwrap_err();
        assert!(err.to_string().starts_with("line 2"), "{err}");
    }

    #[test]
    fn wrong_header() {
        let (dir, labels) = fixture(&[]);
        fs::write(&labels, "image,level\n").unwrap();
        assert!(matches!(load_manifest(&labels, dir.path(), &names()), Err(Error::LabelsFile { .. })));
    }
}
