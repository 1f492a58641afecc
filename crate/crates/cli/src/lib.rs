//! Library side of the `stabledecay` command: verify suites, config runs and
//! small table utilities. The binary is a thin clap wrapper around these.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod report;
pub mod run;
pub mod suites;

use stabledecay::engine::derive_seed;

/// Renders a CSV with right-aligned columns.
pub fn tabulate(text: &str) -> anyhow::Result<String> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let rows: Vec<Vec<String>> = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<Result<_, _>>()?;
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut width = vec![0usize; cols];
    for row in &rows {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for (k, row) in rows.iter().enumerate() {
        let line: Vec<String> = row.iter().zip(&width).map(|(c, &w)| format!("{c:>w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if k == 0 {
            let rule: Vec<String> = width.iter().map(|&w| "-".repeat(w)).collect();
            out.push_str(&rule.join("  "));
            out.push('\n');
        }
    }
    Ok(out)
}

/// `index,seed` rows for the per-point seeds derived from `master`.
pub fn seed_table(master: u64, count: u64) -> String {
    let mut s = String::from("index,seed\n");
    for k in 0..count {
        s.push_str(&format!("{k},{}\n", derive_seed(master, k)));
    }
    s
}
