//! Persistent dual-zone store.
//!
//! Layout under the store root:
//!
//! ```text
//! raw/ab/cd/<digest>          raw bytes, content addressed (ab, cd = first hex pairs)
//! raw/ab/cd/<digest>.meta     canonical JSON {declared_name, provider, received_at}
//! records/segment-000001.log  typed zone: one canonical record per line
//! lineage/lineage.log         one canonical lineage event per line
//! datasets/<id>.json          latest manifest of each materialized dataset
//! index/index.json            last built search index
//! ```
//!
//! Record segments roll over at [`SEGMENT_MAX_BYTES`]. Every file is
//! append-only or replaced atomically (write to a temp file, then rename).

mod filter;

pub use filter::{Pattern, ScanFilter};

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::capture::RawDocument;
use crate::model::{
    canonical_json, canonical_parse, Digest, LineageEvent, MetaRecord, ModelError, RawId,
    RecordId, Timestamp,
};

pub const SEGMENT_MAX_BYTES: u64 = 4 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corrupt {path} line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("store at {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("store was opened read-only")]
    ReadOnly,
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeta {
    declared_name: Option<String>,
    provider: String,
    received_at: Timestamp,
}

/// Counts reported by [`Store::stats`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreStats {
    pub raw_count: u64,
    pub record_count: u64,
    pub lineage_count: u64,
    pub bytes_on_disk: u64,
}

pub struct Store {
    root: PathBuf,
    raw_count: u64,
    records: Vec<MetaRecord>,
    by_id: HashMap<RecordId, usize>,
    segment_no: u32,
    segment_len: u64,
    snapshot: Digest,
    last_seq: u64,
    /// Held for the writer's lifetime; `None` when read-only.
    lock: Option<File>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store")
            .field("root", &self.root)
            .field("records", &self.records.len())
            .field("last_seq", &self.last_seq)
            .finish()
    }
}

impl Store {
    /// Opens (creating if needed) the store rooted at `root` as its single
    /// writer. A second writer, in this or another process, gets
    /// [`StoreError::Locked`].
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_owned();
        for dir in ["raw", "records", "lineage", "datasets", "index"] {
            let p = root.join(dir);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        let lock_path = root.join("store.lock");
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(io_err(&lock_path))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(fs::TryLockError::WouldBlock) => return Err(StoreError::Locked(root)),
            Err(fs::TryLockError::Error(e)) => return Err(io_err(&lock_path)(e)),
        }
        Self::load(root, Some(lock))
    }

    /// Opens an existing store for reading alongside a writer. The view is
    /// the committed state at open time.
    pub fn open_read_only(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_owned();
        for dir in ["raw", "records", "lineage"] {
            let p = root.join(dir);
            if !p.is_dir() {
                return Err(StoreError::Io {
                    path: p,
                    source: io::Error::new(io::ErrorKind::NotFound, "not a store directory"),
                });
            }
        }
        Self::load(root, None)
    }

    fn load(root: PathBuf, lock: Option<File>) -> Result<Self, StoreError> {
        let mut store = Store {
            raw_count: count_raw(&root.join("raw"))?,
            root,
            records: Vec::new(),
            by_id: HashMap::new(),
            segment_no: 1,
            segment_len: 0,
            snapshot: Digest::of(b""),
            last_seq: 0,
            lock,
        };
        store.load_segments()?;
        store.last_seq = store.read_lineage()?.last().map_or(0, |e| e.seq);
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn is_read_only(&self) -> bool {
        self.lock.is_none()
    }

    fn writable(&self) -> Result<(), StoreError> {
        if self.lock.is_some() {
            Ok(())
        } else {
            Err(StoreError::ReadOnly)
        }
    }

    fn segment_path(&self, n: u32) -> PathBuf {
        self.root.join("records").join(format!("segment-{n:06}.log"))
    }

    /// Typed-zone segment files in order.
    pub fn segment_files(&self) -> Result<Vec<PathBuf>, StoreError> {
        let dir = self.root.join("records");
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("segment-") && n.ends_with(".log"))
            })
            .collect();
        files.sort();
        Ok(files)
    }

    fn load_segments(&mut self) -> Result<(), StoreError> {
        for path in self.segment_files()? {
            let n: u32 = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_prefix("segment-")?.strip_suffix(".log")?.parse().ok())
                .ok_or_else(|| StoreError::Corrupt {
                    path: path.clone(),
                    line: 0,
                    message: "bad segment name".into(),
                })?;
            let mut data = fs::read(&path).map_err(io_err(&path))?;
            // A torn final line (no newline) is an interrupted append. Readers
            // ignore it; the writer cuts it off.
            if !data.is_empty() && !data.ends_with(b"\n") {
                let keep = data.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
                data.truncate(keep);
                if self.lock.is_some() {
                    let f = OpenOptions::new().write(true).open(&path).map_err(io_err(&path))?;
                    f.set_len(keep as u64).map_err(io_err(&path))?;
                }
            }
            for (i, line) in data.split(|&b| b == b'\n').enumerate() {
                if line.is_empty() {
                    continue;
                }
                let record = canonical_parse(line).map_err(|e| StoreError::Corrupt {
                    path: path.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                self.index_record(record);
            }
            self.segment_no = n;
            self.segment_len = data.len() as u64;
        }
        Ok(())
    }

    fn index_record(&mut self, record: MetaRecord) {
        let mut chain = self.snapshot.as_bytes().to_vec();
        chain.extend_from_slice(record.id().as_bytes());
        self.snapshot = Digest::of(&chain);
        self.by_id.insert(record.id(), self.records.len());
        self.records.push(record);
    }

    fn raw_path(&self, id: &RawId) -> PathBuf {
        let hex = id.to_hex();
        self.root.join("raw").join(&hex[0..2]).join(&hex[2..4]).join(hex)
    }

    /// Stores raw bytes under their digest; a repeat is a no-op.
    pub fn put_raw(&mut self, doc: &RawDocument) -> Result<(RawId, bool), StoreError> {
        self.writable()?;
        let id = Digest::of(&doc.bytes);
        let path = self.raw_path(&id);
        if path.exists() {
            return Ok((id, false));
        }
        let dir = path.parent().expect("fan-out dir");
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let meta = RawMeta {
            declared_name: doc.declared_name.clone(),
            provider: doc.provider.clone(),
            received_at: doc.received_at,
        };
        write_atomic(&meta_path(&path), &canonical_json(&meta))?;
        write_atomic(&path, &doc.bytes)?;
        self.raw_count += 1;
        Ok((id, true))
    }

    pub fn has_raw(&self, id: &RawId) -> bool {
        self.raw_path(id).exists()
    }

    pub fn get_raw(&self, id: &RawId) -> Result<Option<RawDocument>, StoreError> {
        let path = self.raw_path(id);
        if !path.exists() {
            return Ok(None);
        }
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let mpath = meta_path(&path);
        let meta_bytes = fs::read(&mpath).map_err(io_err(&mpath))?;
        let meta: RawMeta = serde_json::from_slice(&meta_bytes).map_err(|e| StoreError::Corrupt {
            path: mpath.clone(),
            line: 1,
            message: e.to_string(),
        })?;
        Ok(Some(RawDocument {
            raw_id: *id,
            bytes,
            declared_name: meta.declared_name,
            received_at: meta.received_at,
            provider: meta.provider,
        }))
    }

    /// Appends a record to the typed zone unless its id is already present.
    pub fn put_record(&mut self, record: &MetaRecord) -> Result<(RecordId, bool), StoreError> {
        self.writable()?;
        let bytes = crate::model::canonical_serialize(record)?;
        let id = record.id();
        if self.by_id.contains_key(&id) {
            return Ok((id, false));
        }
        let line_len = bytes.len() as u64 + 1;
        if self.segment_len > 0 && self.segment_len + line_len > SEGMENT_MAX_BYTES {
            self.segment_no += 1;
            self.segment_len = 0;
        }
        let path = self.segment_path(self.segment_no);
        let mut line = bytes;
        line.push(b'\n');
        append(&path, &line)?;
        self.segment_len += line_len;
        self.index_record(record.clone());
        Ok((id, true))
    }

    pub fn get_record(&self, id: &str) -> Result<Option<&MetaRecord>, ModelError> {
        let id = Digest::parse(id)?;
        Ok(self.record(&id))
    }

    pub fn record(&self, id: &RecordId) -> Option<&MetaRecord> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, id: &RecordId) -> bool {
        self.by_id.contains_key(id)
    }

    /// Records matching `filter`, in insertion order.
    pub fn scan<'a>(&'a self, filter: &'a ScanFilter) -> impl Iterator<Item = &'a MetaRecord> + 'a {
        self.records.iter().filter(move |r| filter.matches(r))
    }

    pub fn scan_where<'a>(
        &'a self,
        mut pred: impl FnMut(&MetaRecord) -> bool + 'a,
    ) -> impl Iterator<Item = &'a MetaRecord> + 'a {
        self.records.iter().filter(move |r| pred(r))
    }

    pub fn records(&self) -> &[MetaRecord] {
        &self.records
    }

    /// Identifier of the current typed-zone contents: a hash chain over
    /// record ids in insertion order.
    pub fn snapshot_id(&self) -> Digest {
        self.snapshot
    }

    fn lineage_path(&self) -> PathBuf {
        self.root.join("lineage").join("lineage.log")
    }

    /// Appends an event, assigning it the next sequence number.
    pub fn append_lineage(&mut self, mut event: LineageEvent) -> Result<u64, StoreError> {
        self.writable()?;
        event.seq = self.last_seq + 1;
        let mut line = event.canonical_bytes();
        line.push(b'\n');
        append(&self.lineage_path(), &line)?;
        self.last_seq = event.seq;
        Ok(event.seq)
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn lineage_bytes(&self) -> Result<Vec<u8>, StoreError> {
        let path = self.lineage_path();
        match fs::read(&path) {
            Ok(b) => Ok(b),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    pub fn read_lineage(&self) -> Result<Vec<LineageEvent>, StoreError> {
        let path = self.lineage_path();
        let data = self.lineage_bytes()?;
        let mut out = Vec::new();
        for (i, line) in data.split(|&b| b == b'\n').enumerate() {
            if line.is_empty() {
                continue;
            }
            let ev = LineageEvent::parse(line).map_err(|e| StoreError::Corrupt {
                path: path.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            let expected = out.len() as u64 + 1;
            if ev.seq != expected {
                return Err(StoreError::Corrupt {
                    path: path.clone(),
                    line: i + 1,
                    message: format!("sequence gap: expected {expected}, found {}", ev.seq),
                });
            }
            out.push(ev);
        }
        Ok(out)
    }

    pub fn stats(&self) -> Result<StoreStats, StoreError> {
        Ok(StoreStats {
            raw_count: self.raw_count,
            record_count: self.records.len() as u64,
            lineage_count: self.last_seq,
            bytes_on_disk: dir_size(&self.root)?,
        })
    }

    /// Replaces a small artifact file (dataset manifest, index) atomically.
    pub fn write_artifact(&self, rel: &str, bytes: &[u8]) -> Result<(), StoreError> {
        self.writable()?;
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        write_atomic(&path, bytes)
    }

    pub fn read_artifact(&self, rel: &str) -> Result<Option<Vec<u8>>, StoreError> {
        let path = self.root.join(rel);
        match fs::read(&path) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

fn meta_path(raw: &Path) -> PathBuf {
    let mut p = raw.as_os_str().to_owned();
    p.push(".meta");
    PathBuf::from(p)
}

fn append(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))?;
    f.flush().map_err(io_err(path))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn count_raw(dir: &Path) -> Result<u64, StoreError> {
    let mut n = 0;
    for l1 in fs::read_dir(dir).map_err(io_err(dir))? {
        let l1 = l1.map_err(io_err(dir))?.path();
        if !l1.is_dir() {
            continue;
        }
        for l2 in fs::read_dir(&l1).map_err(io_err(&l1))? {
            let l2 = l2.map_err(io_err(&l1))?.path();
            if !l2.is_dir() {
                continue;
            }
            for f in fs::read_dir(&l2).map_err(io_err(&l2))? {
                let name = f.map_err(io_err(&l2))?.file_name();
                let name = name.to_string_lossy();
                if name.len() == 64 && Digest::parse(&name).is_ok() {
                    n += 1;
                }
            }
        }
    }
    Ok(n)
}

fn dir_size(dir: &Path) -> Result<u64, StoreError> {
    let mut total = 0;
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let meta = entry.metadata().map_err(io_err(&entry.path()))?;
        if meta.is_dir() {
            total += dir_size(&entry.path())?;
        } else {
            total += meta.len();
        }
    }
    Ok(total)
}
