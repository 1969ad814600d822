use std::io::Write;
use std::path::{Path, PathBuf};
use tempfile::NamedTempFile;

/// Rendered result files, written only once every one of them exists in
/// memory.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_with<F>(&mut self, name: &str, write: F)
    where
        F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    {
        let mut buf = Vec::new();
        // writing into a Vec cannot fail
        write(&mut buf).expect("in-memory write");
        self.add(name, buf);
    }

    /// Writes each file to a temporary sibling and renames it into place.
    pub fn commit(self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in self.files {
            let target = dir.join(&name);
            let mut tmp = NamedTempFile::new_in(dir)?;
            tmp.write_all(&bytes)?;
            tmp.as_file().sync_all()?;
            tmp.persist(&target).map_err(|e| e.error)?;
            written.push(target);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_creates_files_and_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let out_dir = dir.path().join("nested");
        let mut o = Outputs::default();
        o.add("a.json", b"{}".to_vec());
        o.add_with("b.csv", |w| writeln!(w, "x,y"));
        let written = o.commit(&out_dir).unwrap();
        assert_eq!(written.len(), 2);
        assert_eq!(std::fs::read_to_string(out_dir.join("b.csv")).unwrap(), "x,y\n");
        assert_eq!(std::fs::read_dir(&out_dir).unwrap().count(), 2);
    }
}
