use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Illumination tag of network inputs: light from North, 6500K.
pub const INPUT_TAG: &str = "N_6500";
/// Illumination tag of targets: light from East, 4500K.
pub const TARGET_TAG: &str = "E_4500";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePair {
    pub scene_id: String,
    pub input_path: PathBuf,
    pub target_path: PathBuf,
}

/// Ordered index of one dataset split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub split: String,
    pub root: PathBuf,
    pub pairs: Vec<SamplePair>,
    /// Scenes skipped during scanning because a file was missing.
    pub skipped: usize,
}

const CSV_HEADER: &str = "scene_id,input_path,target_path";

impl Manifest {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for p in &self.pairs {
            let fields = [
                p.scene_id.clone(),
                p.input_path.to_string_lossy().into_owned(),
                p.target_path.to_string_lossy().into_owned(),
            ];
            if fields.iter().any(|f| f.contains([',', '\n'])) {
                return Err(Error::Dataset(format!(
                    "scene {} has a comma or newline in a field",
                    p.scene_id
                )));
            }
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        Ok(out)
    }

    /// Parse a manifest CSV. Relative paths resolve against `base`. This is
    /// also how datasets with other file naming schemes are adapted.
    pub fn from_csv(text: &str, split: &str, base: &Path) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            other => {
                return Err(Error::Dataset(format!(
                    "manifest header must be {CSV_HEADER:?}, got {other:?}"
                )))
            }
        }
        let mut pairs = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [id, input, target] = fields[..] else {
                return Err(Error::Dataset(format!(
                    "manifest row {} has {} fields",
                    i + 2,
                    fields.len()
                )));
            };
            pairs.push(SamplePair {
                scene_id: id.to_string(),
                input_path: base.join(input),
                target_path: base.join(target),
            });
        }
        pairs.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
        if let Some(w) = pairs.windows(2).find(|w| w[0].scene_id == w[1].scene_id) {
            return Err(Error::Dataset(format!("duplicate scene id {}", w[0].scene_id)));
        }
        if pairs.is_empty() {
            return Err(Error::Dataset("manifest has no pairs".into()));
        }
        Ok(Manifest {
            split: split.to_string(),
            root: base.to_path_buf(),
            pairs,
            skipped: 0,
        })
    }

    pub fn read_csv(path: impl AsRef<Path>, split: &str) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_csv(&text, split, base)
    }

    /// Check that both images of every pair exist with equal dimensions.
    pub fn validate(&self) -> Result<()> {
        for p in &self.pairs {
            let dims = |path: &Path| {
                if !path.is_file() {
                    return Err(Error::MissingFile(path.to_path_buf()));
                }
                image::image_dimensions(path).map_err(|source| Error::Decode {
                    path: path.to_path_buf(),
                    source,
                })
            };
            let (a, b) = (dims(&p.input_path)?, dims(&p.target_path)?);
            if a != b {
                return Err(Error::Dataset(format!(
                    "scene {}: input is {}x{} but target is {}x{}",
                    p.scene_id, a.0, a.1, b.0, b.1
                )));
            }
        }
        Ok(())
    }
}

/// Index `root/<split>/<scene_id>/<tag>.png`. An empty `split` scans `root`
/// directly. Scenes lacking either image are skipped and counted.
pub fn scan_dataset(root: impl AsRef<Path>, split: &str, input_tag: &str, target_tag: &str) -> Result<Manifest> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::Dataset(format!(
            "dataset root {} does not exist",
            root.display()
        )));
    }
    let dir = if split.is_empty() {
        root.to_path_buf()
    } else {
        root.join(split)
    };
    if !dir.is_dir() {
        return Err(Error::Dataset(format!(
            "split directory {} does not exist",
            dir.display()
        )));
    }
    let mut scenes: Vec<(String, PathBuf)> = fs::read_dir(&dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_dir()).unwrap_or(false))
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .collect();
    scenes.sort();

    let mut pairs = Vec::new();
    let mut skipped = 0;
    for (scene_id, path) in scenes {
        let input_path = path.join(format!("{input_tag}.png"));
        let target_path = path.join(format!("{target_tag}.png"));
        if input_path.is_file() && target_path.is_file() {
            pairs.push(SamplePair {
                scene_id,
                input_path,
                target_path,
            });
        } else {
            log::warn!("skipping scene {scene_id}: missing {input_tag}.png or {target_tag}.png");
            skipped += 1;
        }
    }
    if pairs.is_empty() {
        return Err(Error::Dataset(format!(
            "no {input_tag}/{target_tag} pairs under {}",
            dir.display()
        )));
    }
    let manifest = Manifest {
        split: split.to_string(),
        root: root.to_path_buf(),
        pairs,
        skipped,
    };
    manifest.validate()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::image_io::save_image;
    use crate::tensor::{Shape, Tensor};

    fn write(path: &Path, size: usize) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        save_image(&Tensor::<f32>::full(Shape([1, 3, size, size]), 0.3), path).unwrap();
    }

    fn scene(root: &Path, id: &str, tags: &[&str]) {
        for t in tags {
            write(&root.join("train").join(id).join(format!("{t}.png")), 4);
        }
    }

    #[test]
    fn scans_complete_scenes_in_order() {
        let dir = tempfile::tempdir().unwrap();
        scene(dir.path(), "b", &[INPUT_TAG, TARGET_TAG]);
        scene(dir.path(), "a", &[INPUT_TAG, TARGET_TAG]);
        let m = scan_dataset(dir.path(), "train", INPUT_TAG, TARGET_TAG).unwrap();
        let ids: Vec<_> = m.pairs.iter().map(|p| p.scene_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(m.skipped, 0);
    }

    #[test]
    fn incomplete_scene_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        scene(dir.path(), "a", &[INPUT_TAG, TARGET_TAG]);
        scene(dir.path(), "b", &[INPUT_TAG]);
        let m = scan_dataset(dir.path(), "train", INPUT_TAG, TARGET_TAG).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.skipped, 1);
    }

    #[test]
    fn empty_or_missing_root_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(scan_dataset(dir.path().join("missing"), "train", INPUT_TAG, TARGET_TAG).is_err());
        fs::create_dir_all(dir.path().join("train")).unwrap();
        assert!(scan_dataset(dir.path(), "train", INPUT_TAG, TARGET_TAG).is_err());
    }

    #[test]
    fn mismatched_dimensions_fail_at_scan_time() {
        let dir = tempfile::tempdir().unwrap();
        write(&dir.path().join("train/a").join(format!("{INPUT_TAG}.png")), 4);
        write(&dir.path().join("train/a").join(format!("{TARGET_TAG}.png")), 8);
        assert!(matches!(
            scan_dataset(dir.path(), "train", INPUT_TAG, TARGET_TAG),
            Err(Error::Dataset(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        scene(dir.path(), "a", &[INPUT_TAG, TARGET_TAG]);
        scene(dir.path(), "b", &[INPUT_TAG, TARGET_TAG]);
        let m = scan_dataset(dir.path(), "train", INPUT_TAG, TARGET_TAG).unwrap();
        let csv = m.to_csv().unwrap();
        assert!(csv.starts_with("scene_id,input_path,target_path\n"));
        let back = Manifest::from_csv(&csv, "train", Path::new("")).unwrap();
        assert_eq!(back.pairs, m.pairs);

        let dup = "scene_id,input_path,target_path\nx,a.png,b.png\nx,c.png,d.png\n";
        assert!(Manifest::from_csv(dup, "t", Path::new("")).is_err());
        assert!(Manifest::from_csv("id,a,b\n", "t", Path::new("")).is_err());
    }
}
