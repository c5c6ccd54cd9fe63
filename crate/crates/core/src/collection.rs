//! JSONL document collections served by doc id.
//!
//! At startup each file is scanned once to build an [`OffsetIndex`] mapping
//! doc id to the byte range of its line. Serving a document is then a single
//! positional read of exactly that range; bodies are never held in memory.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;

use serde_json::{Map, Value};
use tracing::warn;

use crate::error::{Error, Result};
use crate::model::CollectionDescriptor;

pub type Document = Map<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub offset: u64,
    pub length: u32,
}

#[derive(Debug, Clone)]
pub struct OffsetIndex {
    id_field: String,
    spans: HashMap<String, Span>,
    duplicates: usize,
}

impl OffsetIndex {
    pub fn get(&self, doc_id: &str) -> Option<Span> {
        self.spans.get(doc_id).copied()
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn id_field(&self) -> &str {
        &self.id_field
    }

    /// Number of lines whose id had already been seen.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.spans.keys().map(String::as_str)
    }

    /// Approximate heap footprint: id bytes plus a fixed per-entry cost.
    /// Independent of document body sizes.
    pub fn heap_bytes(&self) -> usize {
        let per_entry = std::mem::size_of::<String>() + std::mem::size_of::<Span>();
        self.spans.keys().map(|k| k.capacity() + per_entry).sum()
    }
}

fn trim_line_end(line: &[u8]) -> &[u8] {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    line.strip_suffix(b"\r").unwrap_or(line)
}

fn parse_line(bytes: &[u8], line: usize) -> Result<Document> {
    match serde_json::from_slice::<Value>(bytes) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(Error::MalformedLine {
            line,
            detail: "not a JSON object".into(),
        }),
        Err(e) => Err(Error::MalformedLine {
            line,
            detail: e.to_string(),
        }),
    }
}

fn extract_id(doc: &Document, id_field: &str, line: usize) -> Result<String> {
    match doc.get(id_field) {
        Some(Value::String(id)) => Ok(id.clone()),
        _ => Err(Error::MissingIdField {
            line,
            field: id_field.to_string(),
        }),
    }
}

/// Streams a JSONL file line by line, yielding `(line_number, span, document)`
/// for every non-blank line.
fn scan_file(path: &Path, mut visit: impl FnMut(usize, Span, Document) -> Result<()>) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut reader = BufReader::with_capacity(1 << 16, file);
    let mut buf = Vec::new();
    let mut offset = 0u64;
    let mut line_no = 0usize;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let body = trim_line_end(&buf);
        if !body.iter().all(u8::is_ascii_whitespace) {
            let length = u32::try_from(body.len()).map_err(|_| Error::MalformedLine {
                line: line_no,
                detail: "line longer than 4 GiB".into(),
            })?;
            let doc = parse_line(body, line_no)?;
            visit(line_no, Span { offset, length }, doc)?;
        }
        offset += n as u64;
    }
    Ok(())
}

pub fn build_offset_index(path: &Path, id_field: &str) -> Result<OffsetIndex> {
    let mut spans = HashMap::new();
    let mut duplicates = 0;
    scan_file(path, |line, span, doc| {
        let id = extract_id(&doc, id_field, line)?;
        if spans.insert(id.clone(), span).is_some() {
            duplicates += 1;
            warn!(path = %path.display(), line, doc_id = %id, "duplicate doc id; keeping the later line");
        }
        Ok(())
    })?;
    Ok(OffsetIndex {
        id_field: id_field.to_string(),
        spans,
        duplicates,
    })
}

/// Random-access byte source. `File` implements it with `pread`, so
/// concurrent reads never share a cursor.
pub trait PositionalRead: Send + Sync {
    fn read_exact_at(&self, buf: &mut [u8], offset: u64) -> std::io::Result<()>;
}

impl PositionalRead for File {
    fn read_exact_at(&self, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
        std::os::unix::fs::FileExt::read_exact_at(self, buf, offset)
    }
}

pub struct Collection {
    descriptor: CollectionDescriptor,
    index: OffsetIndex,
    source: Box<dyn PositionalRead>,
}

impl std::fmt::Debug for Collection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Collection")
            .field("name", &self.descriptor.name)
            .field("documents", &self.index.len())
            .finish()
    }
}

impl Collection {
    pub fn open(descriptor: CollectionDescriptor) -> Result<Self> {
        let index = build_offset_index(&descriptor.doc_path, &descriptor.id_field)?;
        let file = File::open(&descriptor.doc_path)?;
        Ok(Self::with_source(descriptor, index, Box::new(file)))
    }

    pub fn with_source(descriptor: CollectionDescriptor, index: OffsetIndex, source: Box<dyn PositionalRead>) -> Self {
        Self {
            descriptor,
            index,
            source,
        }
    }

    pub fn name(&self) -> &str {
        &self.descriptor.name
    }

    pub fn descriptor(&self) -> &CollectionDescriptor {
        &self.descriptor
    }

    pub fn index(&self) -> &OffsetIndex {
        &self.index
    }

    pub fn get_document(&self, doc_id: &str) -> Result<Document> {
        let span = self.index.get(doc_id).ok_or_else(|| Error::DocumentNotFound {
            collection: self.descriptor.name.clone(),
            doc_id: doc_id.to_string(),
        })?;
        let mut buf = vec![0u8; span.length as usize];
        self.source.read_exact_at(&mut buf, span.offset)?;
        parse_line(&buf, 0).map_err(|e| Error::Io(format!("collection {} changed on disk: {e}", self.name())))
    }

    /// Text used for scoring: the configured text fields in order, or every
    /// string field except the id field in file order.
    pub fn document_text(&self, doc: &Document) -> String {
        let parts: Vec<&str> = if self.descriptor.text_fields.is_empty() {
            doc.iter()
                .filter(|(k, _)| **k != self.descriptor.id_field)
                .filter_map(|(_, v)| v.as_str())
                .collect()
        } else {
            self.descriptor
                .text_fields
                .iter()
                .filter_map(|f| doc.get(f).and_then(Value::as_str))
                .collect()
        };
        parts.join("\n")
    }

    /// Sequential pass over the file, honoring last-occurrence semantics for
    /// duplicate ids. Used to build indexes at startup.
    pub fn for_each_text(&self, mut visit: impl FnMut(&str, String)) -> Result<()> {
        scan_file(&self.descriptor.doc_path, |line, span, doc| {
            let id = extract_id(&doc, &self.descriptor.id_field, line)?;
            if self.index.get(&id) == Some(span) {
                visit(&id, self.document_text(&doc));
            }
            Ok(())
        })
    }
}

#[derive(Debug, Default, Clone)]
pub struct CollectionStore {
    collections: HashMap<String, Arc<Collection>>,
}

impl CollectionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, collection: Collection) -> Result<()> {
        let name = collection.name().to_string();
        if self.collections.contains_key(&name) {
            return Err(Error::Config(format!("duplicate collection name {name:?}")));
        }
        self.collections.insert(name, Arc::new(collection));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Arc<Collection>> {
        self.collections
            .get(name)
            .ok_or_else(|| Error::UnknownCollection(name.to_string()))
    }

    pub fn get_document(&self, collection: &str, doc_id: &str) -> Result<Document> {
        self.get(collection)?.get_document(doc_id)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.collections.keys().map(String::as_str)
    }
}
