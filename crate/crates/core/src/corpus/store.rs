//! JSONL dataset file: one [`SnippetRecord`] per line.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{CorpusError, SnippetRecord};

/// A line that could not be decoded. Loading continues past it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedLine {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct LoadedCorpus {
    pub records: Vec<SnippetRecord>,
    pub malformed: Vec<MalformedLine>,
}

pub fn read_corpus<R: BufRead>(reader: R) -> Result<LoadedCorpus, CorpusError> {
    let mut out = LoadedCorpus::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| CorpusError::io("<reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SnippetRecord = match serde_json::from_str(&line) {
            Ok(record) => record,
            Err(err) => {
                out.malformed.push(MalformedLine {
                    line: lineno,
                    message: err.to_string(),
                });
                continue;
            }
        };
        if record.code.trim_end().is_empty() {
            out.malformed.push(MalformedLine {
                line: lineno,
                message: "empty code".into(),
            });
            continue;
        }
        if seen.insert(record.snippet_id.clone(), lineno).is_some() {
            return Err(CorpusError::DuplicateSnippetId {
                id: record.snippet_id,
                line: lineno,
            });
        }
        out.records.push(record);
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<LoadedCorpus, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    read_corpus(BufReader::new(file)).map_err(|err| match err {
        CorpusError::Io { source, .. } => CorpusError::io(path, source),
        other => other,
    })
}

pub fn write_corpus<W: Write>(records: &[SnippetRecord], mut writer: W) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn save_corpus(records: &[SnippetRecord], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    write_corpus(records, BufWriter::new(file)).map_err(|e| CorpusError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(i: usize) -> SnippetRecord {
        SnippetRecord {
            package_name: "pkg".into(),
            snippet_id: format!("pkg:README.md:{i}"),
            language_hint: i.is_multiple_of(2).then(|| "js".to_string()),
            code: format!("console.log({i});"),
            description: (!i.is_multiple_of(3)).then(|| format!("Prints {i}.")),
            source_path: "README.md".into(),
            block_index: i,
        }
    }

    #[test]
    fn absent_optionals_are_omitted_and_order_is_fixed() {
        let mut buf = Vec::new();
        write_corpus(&[record(3)], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"package_name\":\"pkg\",\"snippet_id\":\"pkg:README.md:3\",\"code\":\"console.log(3);\",\"source_path\":\"README.md\",\"block_index\":3}\n"
        );
        let mut buf = Vec::new();
        write_corpus(&[record(4)], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"package_name\":\"pkg\",\"snippet_id\":\"pkg:README.md:4\",\"language_hint\":\"js\",\"code\":\"console.log(4);\",\"description\":\"Prints 4.\",\"source_path\":\"README.md\",\"block_index\":4}\n"
        );
    }

    #[test]
    fn save_then_load_three() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let records: Vec<_> = (0..3).map(record).collect();
        save_corpus(&records, &path).unwrap();
        let loaded = load_corpus(&path).unwrap();
        assert_eq!(loaded.records, records);
        assert!(loaded.malformed.is_empty());
    }

    #[test]
    fn malformed_line_is_isolated() {
        let mut buf = Vec::new();
        write_corpus(&(0..10).map(record).collect::<Vec<_>>(), &mut buf).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let mut broken: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
        broken[4] = "{\"package_name\": oops".into();
        text = broken.join("\n");
        let loaded = read_corpus(text.as_bytes()).unwrap();
        assert_eq!(loaded.records.len(), 9);
        assert_eq!(loaded.malformed.len(), 1);
        assert_eq!(loaded.malformed[0].line, 5);
    }

    #[test]
    fn unknown_field_is_malformed() {
        let text = "{\"package_name\":\"p\",\"snippet_id\":\"a\",\"code\":\"x\",\"source_path\":\"R\",\"block_index\":0,\"extra\":1}\n";
        let loaded = read_corpus(text.as_bytes()).unwrap();
        assert_eq!(loaded.malformed.len(), 1);
    }

    #[test]
    fn duplicate_id_is_fatal() {
        let mut buf = Vec::new();
        write_corpus(&[record(1), record(2), record(1)], &mut buf).unwrap();
        assert!(matches!(
            read_corpus(buf.as_slice()),
            Err(CorpusError::DuplicateSnippetId { line: 3, .. })
        ));
    }

    #[test]
    fn many_ids_load_without_collision() {
        let records: Vec<_> = (0..20_000).map(record).collect();
        let mut buf = Vec::new();
        write_corpus(&records, &mut buf).unwrap();
        assert_eq!(read_corpus(buf.as_slice()).unwrap().records.len(), 20_000);
    }

    proptest! {
        #[test]
        fn bytes_survive_load_save(
            code in "[^\\s]\\PC{0,40}",
            desc in proptest::option::of("\\PC{0,60}"),
            hint in proptest::option::of("[a-z]{1,8}"),
        ) {
            let rec = SnippetRecord {
                package_name: "p".into(),
                snippet_id: "p:R:0".into(),
                language_hint: hint,
                code,
                description: desc,
                source_path: "R".into(),
                block_index: 0,
            };
            let mut first = Vec::new();
            write_corpus(std::slice::from_ref(&rec), &mut first).unwrap();
            let loaded = read_corpus(first.as_slice()).unwrap();
            prop_assert_eq!(&loaded.records, &vec![rec]);
            let mut second = Vec::new();
            write_corpus(&loaded.records, &mut second).unwrap();
            prop_assert_eq!(first, second);
        }
    }
}
