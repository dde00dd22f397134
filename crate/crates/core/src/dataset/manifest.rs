use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable naming the directory manifest paths are relative to.
/// When unset, paths resolve against the manifest's own directory.
pub const DATASET_ROOT_ENV: &str = "DFD_DATASET_ROOT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub rgb_path: String,
    pub depth_path: String,
    pub split: Split,
}

/// `rgb_path,depth_path,split` rows with paths relative to `root`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub root: PathBuf,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>, root: impl Into<PathBuf>) -> Self {
        Self {
            entries,
            root: root.into(),
        }
    }

    /// Loads a manifest, resolving paths against `$DFD_DATASET_ROOT` or the
    /// manifest's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let root = match std::env::var_os(DATASET_ROOT_ENV) {
            Some(r) if !r.is_empty() => PathBuf::from(r),
            _ => path.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        Self::load_with_root(path, root)
    }

    pub fn load_with_root(path: &Path, root: impl Into<PathBuf>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, root).map_err(|e| match e {
            Error::InvalidArgument(m) => Error::format(path, m),
            other => other,
        })
    }

    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["rgb_path", "depth_path", "split"] {
            return Err(Error::InvalidArgument(format!(
                "manifest header must be rgb_path,depth_path,split, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut entries = Vec::new();
        for (row, rec) in reader.deserialize::<ManifestEntry>().enumerate() {
            let e = rec.map_err(|e| Error::InvalidArgument(format!("row {}: {e}", row + 1)))?;
            if e.rgb_path.is_empty() || e.depth_path.is_empty() {
                return Err(Error::InvalidArgument(format!("row {}: empty path", row + 1)));
            }
            entries.push(e);
        }
        Ok(Self::new(entries, root))
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(["rgb_path", "depth_path", "split"]).expect("in-memory write");
        for e in &self.entries {
            w.serialize(e).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 csv")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_serialize() {
        let text = "rgb_path,depth_path,split\nrgb/a.png,depth/a.png,train\nrgb/b.png,depth/b.png,test\n";
        let m = Manifest::parse(text, "/data").unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries[1].split, Split::Test);
        assert_eq!(m.resolve(&m.entries[0].rgb_path), PathBuf::from("/data/rgb/a.png"));
        assert_eq!(m.split(Split::Train).count(), 1);
        assert_eq!(m.to_csv(), text);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(Manifest::parse("a,b,c\n", ".").is_err());
        assert!(Manifest::parse("rgb_path,depth_path,split\nx.png,y.png,val\n", ".").is_err());
        assert!(Manifest::parse("rgb_path,depth_path,split\n,y.png,train\n", ".").is_err());
    }
}
