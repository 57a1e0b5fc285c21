//! Dataset download with pinned SHA-256 verification.
//!
//! Canonical archives are fetched over HTTP(S), checked against the
//! digests below, and decompressed next to the archive. Cached archives
//! that verify are reused; corrupted ones are re-downloaded once.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// How an archive expands into data files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchiveKind {
    /// Single gzip member; output name is the archive name minus `.gz`.
    Gzip,
    /// Gzipped tar; `.bin` members are extracted flat into the
    /// destination directory.
    TarGz,
}

/// One downloadable archive with its pinned digest.
#[derive(Debug, Clone)]
pub struct DatasetFile {
    pub url: &'static str,
    pub archive_name: &'static str,
    pub sha256: &'static str,
    pub kind: ArchiveKind,
}

/// A named dataset: the archives that make it up.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub name: &'static str,
    pub files: &'static [DatasetFile],
}

pub const DATASET_MANIFESTS: &[DatasetManifest] = &[
    DatasetManifest {
        name: "mnist",
        files: &[
            DatasetFile {
                url: "https://storage.googleapis.com/cvdf-datasets/mnist/train-images-idx3-ubyte.gz",
                archive_name: "train-images-idx3-ubyte.gz",
                sha256: "440fcabf73cc546fa21475e81ea370265605f56be210a4024d2ca8f203523609",
                kind: ArchiveKind::Gzip,
            },
            DatasetFile {
                url: "https://storage.googleapis.com/cvdf-datasets/mnist/train-labels-idx1-ubyte.gz",
                archive_name: "train-labels-idx1-ubyte.gz",
                sha256: "3552534a0a558bbed6aed32b30c495cca23d567ec52cac8be1a0730e8010255c",
                kind: ArchiveKind::Gzip,
            },
            DatasetFile {
                url: "https://storage.googleapis.com/cvdf-datasets/mnist/t10k-images-idx3-ubyte.gz",
                archive_name: "t10k-images-idx3-ubyte.gz",
                sha256: "8d422c7b0a1c1c79245a5bcf07fe86e33eeafee792b84584aec276f5a2dbc4e6",
                kind: ArchiveKind::Gzip,
            },
            DatasetFile {
                url: "https://storage.googleapis.com/cvdf-datasets/mnist/t10k-labels-idx1-ubyte.gz",
                archive_name: "t10k-labels-idx1-ubyte.gz",
                sha256: "f7ae60f92e00ec6debd23a6088c31dbd2371eca3ffa0defaefb259924204aec6",
                kind: ArchiveKind::Gzip,
            },
        ],
    },
    DatasetManifest {
        name: "fashion-mnist",
        files: &[
            DatasetFile {
                url: "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/train-images-idx3-ubyte.gz",
                archive_name: "train-images-idx3-ubyte.gz",
                sha256: "3aede38d61863908ad78613f6a32ed271626dd12800ba2636569512369268a84",
                kind: ArchiveKind::Gzip,
            },
            DatasetFile {
                url: "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/train-labels-idx1-ubyte.gz",
                archive_name: "train-labels-idx1-ubyte.gz",
                sha256: "a04f17134ac03560a47e3764e11b92fc97de4d1bfaf8ba1a3aa29af54cc90845",
                kind: ArchiveKind::Gzip,
            },
            DatasetFile {
                url: "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/t10k-images-idx3-ubyte.gz",
                archive_name: "t10k-images-idx3-ubyte.gz",
                sha256: "346e55b948d973a97e58d2351dde16a484bd415d4595297633bb08f03db6a073",
                kind: ArchiveKind::Gzip,
            },
            DatasetFile {
                url: "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/t10k-labels-idx1-ubyte.gz",
                archive_name: "t10k-labels-idx1-ubyte.gz",
                sha256: "67da17c76eaffca5446c3361aaab5c3cd6d1c2608764d35dfb1850b086bf8dd5",
                kind: ArchiveKind::Gzip,
            },
        ],
    },
    DatasetManifest {
        name: "cifar10",
        files: &[DatasetFile {
            url: "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz",
            archive_name: "cifar-10-binary.tar.gz",
            sha256: "c4a38c50a1bc5f3a1c5537f2155ab9d68f9f25eb1ed8d9ddda3db29a59bca1dd",
            kind: ArchiveKind::TarGz,
        }],
    },
];

/// Download, verify, and decompress a named dataset into
/// `destination_dir`. Returns the paths of the decompressed data files.
pub fn fetch_dataset(name: &str, destination_dir: &Path) -> Result<Vec<PathBuf>> {
    let manifest = DATASET_MANIFESTS
        .iter()
        .find(|m| m.name == name)
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown dataset {name:?}; known: {}",
                DATASET_MANIFESTS
                    .iter()
                    .map(|m| m.name)
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })?;
    fetch_with_manifest(manifest, destination_dir)
}

/// Same as [`fetch_dataset`] but with an explicit manifest; the fetch
/// logic is exercised against local servers this way.
pub fn fetch_with_manifest(
    manifest: &DatasetManifest,
    destination_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(destination_dir)?;
    let mut outputs = Vec::new();
    for file in manifest.files {
        let archive_path = destination_dir.join(file.archive_name);
        ensure_archive(file, &archive_path)?;
        outputs.extend(decompress(file, &archive_path, destination_dir)?);
    }
    Ok(outputs)
}

/// Make sure a verified archive sits at `archive_path`: reuse a cached
/// copy when its digest matches, otherwise (re-)download once.
fn ensure_archive(file: &DatasetFile, archive_path: &Path) -> Result<()> {
    if archive_path.exists() {
        let found = sha256_of(archive_path)?;
        if found == file.sha256 {
            return Ok(());
        }
        // Corrupted cache: drop it and fall through to a fresh download.
        fs::remove_file(archive_path)?;
    }
    download(file.url, archive_path)?;
    let found = sha256_of(archive_path)?;
    if found != file.sha256 {
        return Err(Error::Integrity {
            path: archive_path.display().to_string(),
            expected: file.sha256.to_string(),
            found,
        });
    }
    Ok(())
}

fn download(url: &str, dest: &Path) -> Result<()> {
    let response = ureq::get(url)
        .call()
        .map_err(|e| Error::Transport(format!("GET {url}: {e}")))?;
    let mut body = Vec::new();
    response
        .into_reader()
        .read_to_end(&mut body)
        .map_err(|e| Error::Transport(format!("reading {url}: {e}")))?;
    write_exclusive(dest, &body)
}

/// Write via an exclusively-created temp file and rename, so concurrent
/// fetches into the same directory never interleave partial writes.
fn write_exclusive(dest: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = dest.with_extension(format!(
        "tmp.{}",
        std::process::id()
    ));
    {
        let mut f = fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&tmp)?;
        use std::io::Write;
        f.write_all(bytes)?;
    }
    fs::rename(&tmp, dest)?;
    Ok(())
}

fn decompress(
    file: &DatasetFile,
    archive_path: &Path,
    destination_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let archive = fs::File::open(archive_path)?;
    match file.kind {
        ArchiveKind::Gzip => {
            let mut decoder = flate2::read::GzDecoder::new(archive);
            let mut bytes = Vec::new();
            decoder
                .read_to_end(&mut bytes)
                .map_err(|e| Error::Format(format!("gunzip {}: {e}", archive_path.display())))?;
            let out_name = file
                .archive_name
                .strip_suffix(".gz")
                .unwrap_or(file.archive_name);
            let out_path = destination_dir.join(out_name);
            write_exclusive(&out_path, &bytes)?;
            Ok(vec![out_path])
        }
        ArchiveKind::TarGz => {
            let decoder = flate2::read::GzDecoder::new(archive);
            let mut tar = tar::Archive::new(decoder);
            let mut outputs = Vec::new();
            for entry in tar
                .entries()
                .map_err(|e| Error::Format(format!("untar {}: {e}", archive_path.display())))?
            {
                let mut entry =
                    entry.map_err(|e| Error::Format(format!("tar entry: {e}")))?;
                let path = entry
                    .path()
                    .map_err(|e| Error::Format(format!("tar path: {e}")))?
                    .into_owned();
                let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                    continue;
                };
                if !name.ends_with(".bin") {
                    continue;
                }
                let mut bytes = Vec::new();
                entry
                    .read_to_end(&mut bytes)
                    .map_err(|e| Error::Format(format!("tar read {name}: {e}")))?;
                let out_path = destination_dir.join(name);
                write_exclusive(&out_path, &bytes)?;
                outputs.push(out_path);
            }
            outputs.sort();
            Ok(outputs)
        }
    }
}

fn sha256_of(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
