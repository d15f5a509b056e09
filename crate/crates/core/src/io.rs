//! JSON-lines state sets.
//!
//! Line 1 is a header object `{"record": "header", ..StateSetMeta}`; every
//! following line is `{"record": "state", "state": [..]}` with optional
//! `log_density` and `weight`. Floats are written in shortest round-trip
//! decimal form, so reading a file back reproduces every vector bitwise.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::State;
use crate::error::{Error, Result};
use crate::stateset::{StateSet, StateSetMeta};

// one header per file, so the size gap does not matter
#[allow(clippy::large_enum_variant)]
#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record {
    Header(StateSetMeta),
    State {
        state: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        log_density: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weight: Option<f64>,
    },
}

pub fn write_states<W: Write>(set: &StateSet, mut w: W) -> Result<()> {
    set.validate()?;
    serde_json::to_writer(&mut w, &Record::Header(set.meta.clone()))?;
    w.write_all(b"\n")?;
    for (i, s) in set.states.iter().enumerate() {
        let rec = Record::State {
            state: s.0.clone(),
            log_density: set.log_densities.as_ref().map(|v| v[i]),
            weight: set.weights.as_ref().map(|v| v[i]),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_states<R: BufRead>(r: R) -> Result<StateSet> {
    let mut lines = r.lines();
    let meta = loop {
        let Some(line) = lines.next() else {
            return Err(Error::Format("missing header record".into()));
        };
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Record>(&line) {
            Ok(Record::Header(m)) => break m,
            Ok(_) => return Err(Error::Format("first record must be a header".into())),
            Err(e) => return Err(Error::Format(format!("header: {e}"))),
        }
    };
    if meta.format_version > crate::FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format_version {}",
            meta.format_version
        )));
    }
    let mut states = Vec::new();
    let mut lds = Vec::new();
    let mut ws = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Record>(&line) {
            Ok(Record::State {
                state,
                log_density,
                weight,
            }) => {
                states.push(State(state));
                lds.push(log_density);
                ws.push(weight);
            }
            Ok(Record::Header(_)) => return Err(Error::Format(format!("line {}: second header", lineno + 2))),
            Err(e) => return Err(Error::Format(format!("line {}: {e}", lineno + 2))),
        }
    }
    let collect = |v: Vec<Option<f64>>| -> Result<Option<Vec<f64>>> {
        if v.iter().all(Option::is_none) {
            Ok(None)
        } else if v.iter().all(Option::is_some) {
            Ok(Some(v.into_iter().flatten().collect()))
        } else {
            Err(Error::Format(
                "optional fields must be present on all records or none".into(),
            ))
        }
    };
    let set = StateSet {
        meta,
        states,
        log_densities: collect(lds)?,
        weights: collect(ws)?,
    };
    set.validate()?;
    Ok(set)
}

pub fn save_states(set: &StateSet, path: &Path) -> Result<()> {
    write_states(set, BufWriter::new(File::create(path)?))
}

pub fn load_states(path: &Path) -> Result<StateSet> {
    read_states(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvSpec;
    use proptest::prelude::*;

    fn set_of(states: Vec<Vec<f64>>, with_ld: bool) -> StateSet {
        let env = EnvSpec::by_name("maze").unwrap();
        let mut meta = StateSetMeta::new(&env, "test");
        meta.n = states.len();
        let n = states.len();
        let mut s = StateSet::new(meta, states.into_iter().map(State).collect());
        if with_ld {
            s.log_densities = Some((0..n).map(|i| -(i as f64) / 3.0).collect());
        }
        s
    }

    proptest! {
        #[test]
        fn roundtrip_is_bitwise(rows in proptest::collection::vec(proptest::collection::vec(-1e6f64..1e6, 2), 1..50),
                                with_ld in any::<bool>()) {
            let set = set_of(rows, with_ld);
            let mut buf = Vec::new();
            write_states(&set, &mut buf).unwrap();
            let back = read_states(&buf[..]).unwrap();
            prop_assert_eq!(back.meta, set.meta);
            prop_assert_eq!(back.states.len(), set.states.len());
            for (a, b) in back.states.iter().zip(&set.states) {
                for (x, y) in a.iter().zip(b.iter()) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
            prop_assert_eq!(back.log_densities, set.log_densities);
        }
    }

    #[test]
    fn header_required() {
        let text = "{\"record\":\"state\",\"state\":[1.0,2.0]}\n";
        assert!(matches!(read_states(text.as_bytes()), Err(Error::Format(_))));
        assert!(read_states("".as_bytes()).is_err());
        assert!(read_states("not json\n".as_bytes()).is_err());
    }

    #[test]
    fn header_line_layout() {
        let set = set_of(vec![vec![0.5, 0.25]], false);
        let mut buf = Vec::new();
        write_states(&set, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("{\"record\":\"header\",\"format_version\":1,"));
        assert_eq!(lines[1], "{\"record\":\"state\",\"state\":[0.5,0.25]}");
    }
}
