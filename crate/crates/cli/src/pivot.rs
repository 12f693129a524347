//! Pivots the long-format simulation CSV into one row per scenario and
//! checkpoint with a stop-probability column per method, optionally
//! filtered to a single checkpoint label or reduced to a two-method
//! difference column.

use std::collections::BTreeMap;
use std::io::Read;

use crate::CliError;

const KEY_COLS: [&str; 6] = ["scenario_id", "theta0", "theta1", "k", "d", "checkpoint"];

fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

pub(crate) fn pivot<R: Read>(
    reader: R,
    checkpoint_filter: Option<&str>,
    diff: Option<&[String]>,
) -> Result<String, CliError> {
    if let Some(pair) = diff {
        if pair.len() != 2 {
            return Err(usage("--diff takes exactly two method names, `a,b`".into()));
        }
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| usage(format!("malformed results CSV: {e}")))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| usage(format!("results CSV lacks a `{name}` column")))
    };
    let key_cols = KEY_COLS
        .iter()
        .map(|&name| col(name))
        .collect::<Result<Vec<usize>, CliError>>()?;
    let method_col = col("method")?;
    let prob_col = col("stop_prob")?;

    // first-appearance order for both rows and method columns
    let mut row_order: Vec<Vec<String>> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    let mut cells: BTreeMap<Vec<String>, BTreeMap<String, String>> = BTreeMap::new();

    for record in rdr.records() {
        let record = record.map_err(|e| usage(format!("malformed results CSV: {e}")))?;
        let get = |pos: usize| -> Result<&str, CliError> {
            record
                .get(pos)
                .ok_or_else(|| usage("malformed results CSV: short row".into()))
        };
        let key: Vec<String> =
            key_cols.iter().map(|&pos| get(pos).map(str::to_string)).collect::<Result<_, _>>()?;
        if let Some(filter) = checkpoint_filter {
            if key[5] != filter {
                continue;
            }
        }
        let method = get(method_col)?.to_string();
        let prob = get(prob_col)?.to_string();
        if !methods.contains(&method) {
            methods.push(method.clone());
        }
        if !cells.contains_key(&key) {
            row_order.push(key.clone());
        }
        if cells.entry(key).or_default().insert(method.clone(), prob).is_some() {
            return Err(usage(format!("results CSV repeats method `{method}` within one cell")));
        }
    }
    if row_order.is_empty() {
        return Err(usage(match checkpoint_filter {
            Some(f) => format!("no rows at checkpoint `{f}`"),
            None => "results CSV holds no rows".into(),
        }));
    }

    let wanted: Vec<String> = match diff {
        Some(pair) => {
            for name in pair {
                if !methods.contains(name) {
                    return Err(usage(format!("results CSV has no method `{name}`")));
                }
            }
            pair.to_vec()
        }
        None => methods,
    };

    let mut out = String::new();
    out.push_str(&KEY_COLS.join(","));
    for m in &wanted {
        out.push(',');
        out.push_str(m);
    }
    if let Some(pair) = diff {
        out.push_str(&format!(",{}_minus_{}", pair[0], pair[1]));
    }
    out.push('\n');

    for key in row_order {
        let row = &cells[&key];
        out.push_str(&key.join(","));
        for m in &wanted {
            out.push(',');
            out.push_str(row.get(m).map_or("", String::as_str));
        }
        if let Some(pair) = diff {
            let value = match (row.get(&pair[0]), row.get(&pair[1])) {
                (Some(a), Some(b)) => {
                    let (a, b) = (
                        a.parse::<f64>().map_err(|_| {
                            usage(format!("stop_prob `{a}` is not a number"))
                        })?,
                        b.parse::<f64>().map_err(|_| {
                            usage(format!("stop_prob `{b}` is not a number"))
                        })?,
                    );
                    format!("{:.6}", a - b)
                }
                _ => String::new(),
            };
            out.push(',');
            out.push_str(&value);
        }
        out.push('\n');
    }
    Ok(out)
}
