//! Storage properties: format round trips over random datasets, snapshot
//! isolation, write atomicity and revision monotonicity.

use dataflow::storage::{StorageFormat, StorageSession, WriteDelta, WriteFault};
use dataflow::{Dataset, FieldValue, Row};
use proptest::prelude::*;

fn field_value() -> impl Strategy<Value = FieldValue> {
    let leaf = prop_oneof![
        Just(FieldValue::Null),
        "[ -~]{0,12}".prop_map(FieldValue::text),
        any::<i64>().prop_map(|n| FieldValue::int(n >> 11)),
        (-1.0e9_f64..1.0e9).prop_map(FieldValue::float),
        any::<bool>().prop_map(FieldValue::from),
        "\\PC{0,6}".prop_map(FieldValue::text),
    ];
    leaf.prop_recursive(2, 8, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(FieldValue::Sequence),
            prop::collection::vec(("[a-z]{1,6}", inner), 0..3).prop_map(|entries| {
                let mut seen = Vec::new();
                let deduped: Vec<(String, FieldValue)> = entries
                    .into_iter()
                    .filter(|(k, _)| {
                        if seen.contains(k) {
                            false
                        } else {
                            seen.push(k.clone());
                            true
                        }
                    })
                    .collect();
                FieldValue::Object(deduped)
            }),
        ]
    })
}

fn dataset(max_rows: usize) -> impl Strategy<Value = Dataset> {
    let columns = prop::collection::btree_set("[a-z][a-z0-9_]{0,7}", 1..5);
    (columns, 0..max_rows).prop_flat_map(|(columns, rows)| {
        let columns: Vec<String> = columns.into_iter().collect();
        let row = prop::collection::vec(field_value(), columns.len());
        prop::collection::vec(row, rows).prop_map(move |raw_rows| {
            let mut ds = Dataset::with_columns(columns.clone()).unwrap();
            let rows: Vec<Row> = raw_rows
                .into_iter()
                .map(|cells| {
                    let mut row = Row::new();
                    for (column, value) in columns.iter().zip(cells) {
                        row.set(column.clone(), value);
                    }
                    row
                })
                .collect();
            ds.append_rows(rows).unwrap();
            ds
        })
    })
}

/// The documented CSV lossiness: empty text cells decode as null.
fn csv_expected(ds: &Dataset) -> Dataset {
    let mut out = Dataset::with_columns(ds.columns().to_vec()).unwrap();
    let rows: Vec<Row> = ds
        .rows()
        .iter()
        .map(|row| {
            let mut copy = Row::new();
            for column in ds.columns() {
                let value = match row.get(column) {
                    FieldValue::Text(s) if s.is_empty() => FieldValue::Null,
                    other => other.clone(),
                };
                copy.set(column.clone(), value);
            }
            copy
        })
        .collect();
    out.append_rows(rows).unwrap();
    out
}

fn save_and_reload(ds: &Dataset, format: StorageFormat) -> Dataset {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(format!("data.{format}"));
    dataflow::storage::save(ds, &path, format).unwrap();
    let session = StorageSession::open(&path, format).unwrap();
    session.read(None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn jsonl_round_trip_is_value_identical(ds in dataset(30)) {
        prop_assert_eq!(save_and_reload(&ds, StorageFormat::Jsonl), ds);
    }

    #[test]
    fn json_round_trip_is_value_identical(ds in dataset(30)) {
        prop_assert_eq!(save_and_reload(&ds, StorageFormat::Json), ds);
    }

    #[test]
    fn csv_round_trip_under_manifest_rules(ds in dataset(30)) {
        prop_assert_eq!(save_and_reload(&ds, StorageFormat::Csv), csv_expected(&ds));
    }

    #[test]
    fn snapshots_survive_later_writes(ds in dataset(10)) {
        let session = StorageSession::in_memory_with(ds);
        let before = session.read(None).unwrap();
        let copy = before.clone();
        session.write(WriteDelta::AppendRows(vec![Row::new().with("extra", 1i64)])).unwrap();
        prop_assert_eq!(before, copy);
    }
}

#[test]
fn atomicity_under_injected_write_failures() {
    let dir = tempfile::tempdir().unwrap();
    for format in [StorageFormat::Jsonl, StorageFormat::Json] {
        let path = dir.path().join(format!("data.{format}"));
        let session = StorageSession::open(&path, format).unwrap();
        session
            .write(WriteDelta::AppendRows(vec![
                Row::new().with("text", "keep me"),
                Row::new().with("text", "and me"),
            ]))
            .unwrap();
        let bytes_before = std::fs::read(&path).unwrap();
        let revision = session.revision();

        for fault in [WriteFault::BeforeWrite, WriteFault::BeforeRename] {
            session.inject_write_fault(fault);
            let result = session.write(WriteDelta::AppendRows(vec![Row::new().with("text", "lost")]));
            assert!(result.is_err());
            assert_eq!(std::fs::read(&path).unwrap(), bytes_before, "file changed under {fault:?}");
            assert_eq!(session.revision(), revision);
            assert_eq!(session.read(None).unwrap().len(), 2);
        }

        // The session still works after the faults.
        session
            .write(WriteDelta::AppendRows(vec![Row::new().with("text", "third")]))
            .unwrap();
        assert_eq!(session.read(None).unwrap().len(), 3);
    }
}

#[test]
fn revision_monotonicity_over_many_writes() {
    let session = StorageSession::in_memory();
    let mut last = session.revision();
    for i in 0..25 {
        session
            .write(WriteDelta::AppendRows(vec![Row::new().with("n", i as i64)]))
            .unwrap();
        let now = session.revision();
        assert!(now > last);
        last = now;
    }
}
