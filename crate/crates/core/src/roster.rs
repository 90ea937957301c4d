use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Trim, collapse internal whitespace runs to one space, upper-case.
///
/// OCR casing is unreliable, so every name comparison in the crate goes
/// through this.
pub fn normalize_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_uppercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentRecord {
    pub student_id: String,
    /// Name as shown in the cell's name strip.
    #[serde(rename = "name")]
    pub display_name: String,
}

/// Ordered list of students; the closed label set for every class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<StudentRecord>", into = "Vec<StudentRecord>")]
pub struct Roster {
    records: Vec<StudentRecord>,
}

impl Roster {
    pub fn new(records: Vec<StudentRecord>) -> Result<Self> {
        let mut ids = HashSet::new();
        let mut names = HashSet::new();
        for r in &records {
            let norm = normalize_name(&r.display_name);
            if norm.is_empty() {
                return Err(CoreError::Roster(format!(
                    "student {:?} has an empty display name",
                    r.student_id
                )));
            }
            if !ids.insert(r.student_id.as_str()) {
                return Err(CoreError::Roster(format!("duplicate student id {:?}", r.student_id)));
            }
            if !names.insert(norm.clone()) {
                return Err(CoreError::Roster(format!("duplicate display name {norm:?}")));
            }
        }
        Ok(Self { records })
    }

    /// Parse `student_id,name` CSV (header required).
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "student_id" || &headers[1] != "name" {
            return Err(CoreError::Roster(format!(
                "expected header `student_id,name`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut records = Vec::new();
        for row in rdr.deserialize() {
            records.push(row?);
        }
        Self::new(records)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| CoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_csv_reader(file)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(|source| CoreError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn records(&self) -> &[StudentRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.display_name.as_str())
    }

    /// Look a name up by normalized comparison.
    pub fn find(&self, name: &str) -> Option<&StudentRecord> {
        let norm = normalize_name(name);
        self.records.iter().find(|r| normalize_name(&r.display_name) == norm)
    }

    pub fn contains_exact(&self, name: &str) -> bool {
        self.records.iter().any(|r| r.display_name == name)
    }
}

impl TryFrom<Vec<StudentRecord>> for Roster {
    type Error = CoreError;

    fn try_from(records: Vec<StudentRecord>) -> Result<Self> {
        Roster::new(records)
    }
}

impl From<Roster> for Vec<StudentRecord> {
    fn from(r: Roster) -> Self {
        r.records
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, name: &str) -> StudentRecord {
        StudentRecord {
            student_id: id.into(),
            display_name: name.into(),
        }
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_name("  chan  tai\tman "), "CHAN TAI MAN");
        assert_eq!(normalize_name(""), "");
    }

    #[test]
    fn parses_csv() {
        let csv = "student_id,name\n1155001,Chan Tai Man\n1155002,Li Ming\n";
        let r = Roster::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r.find("LI  MING").unwrap().student_id, "1155002");
    }

    #[test]
    fn duplicate_normalized_names_rejected() {
        let err = Roster::new(vec![rec("1", "Li Ming"), rec("2", " LI   MING")]).unwrap_err();
        assert!(err.to_string().contains("duplicate display name"));
    }

    #[test]
    fn duplicate_ids_and_blank_names_rejected() {
        assert!(Roster::new(vec![rec("1", "A"), rec("1", "B")]).is_err());
        assert!(Roster::new(vec![rec("1", "   ")]).is_err());
    }

    #[test]
    fn wrong_header_rejected() {
        let csv = "id,display\n1,A\n";
        assert!(Roster::from_csv_reader(csv.as_bytes()).is_err());
    }
}
