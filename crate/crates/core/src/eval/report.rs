use std::collections::BTreeSet;
use std::io::{BufRead, Read, Write};

use super::aggregate::aggregate_runs;
use super::{EvalError, ErrorDecomposition, RankingRow, RunObservation};

/// Reads observations from CSV (with a header row) or JSON lines; the format
/// is picked from the first non-blank character.
pub fn read_observations<R: Read>(mut reader: R) -> Result<Vec<RunObservation>, EvalError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let obs: Vec<RunObservation> = if text.trim_start().starts_with('{') {
        let mut out = Vec::new();
        for (i, line) in text.as_bytes().lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| EvalError::Invalid(format!("line {}: {e}", i + 1)))?);
        }
        out
    } else {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        rdr.deserialize().collect::<Result<_, _>>()?
    };
    for o in &obs {
        for (name, v) in [("macro_f1", o.macro_f1), ("micro_f1", o.micro_f1)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(EvalError::Invalid(format!("{name}={v} outside [0,1] for {}/{}", o.config_id, o.task_id)));
            }
        }
    }
    Ok(obs)
}

pub fn write_observations_csv<W: Write>(obs: &[RunObservation], writer: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    for o in obs {
        w.serialize(o)?;
    }
    w.flush()?;
    Ok(())
}

fn cell(mean: f64, std: f64, decimals: usize) -> String {
    format!("{mean:.decimals$} ± {std:.decimals$}")
}

/// Per-task breakdown: one row per method, a `mean ± std` Macro-F1 and
/// Micro-F1 column pair per task. Rows follow the macro-F1 ranking.
pub fn write_breakdown_csv<W: Write>(obs: &[RunObservation], decimals: usize, writer: W) -> Result<(), EvalError> {
    let tasks: BTreeSet<&str> = obs.iter().map(|o| o.task_id.as_str()).collect();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["method".to_string()];
    for t in &tasks {
        header.push(format!("{t} Macro-F1"));
        header.push(format!("{t} Micro-F1"));
    }
    w.write_record(&header)?;
    for row in aggregate_runs(obs) {
        let mut rec = vec![row.method.clone()];
        for t in &tasks {
            match row.tasks.iter().find(|s| s.task == *t) {
                Some(s) => {
                    rec.push(cell(s.macro_mean, s.macro_std, decimals));
                    rec.push(cell(s.micro_mean, s.micro_std, decimals));
                }
                None => rec.extend(["".to_string(), "".to_string()]),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Overall ranking with the combined deviation and the resulting range.
pub fn write_ranking_csv<W: Write>(rows: &[RankingRow], writer: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["rank", "method", "mean_macro_f1", "combined_std", "low", "high"])?;
    for (i, r) in rows.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            r.method.clone(),
            format!("{:.4}", r.mean_macro_f1),
            format!("{:.4}", r.combined_std),
            format!("{:.4}", r.mean_macro_f1 - r.combined_std),
            format!("{:.4}", r.mean_macro_f1 + r.combined_std),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Error table: task, FN, retrieval errors, generation errors, ratio, r.
pub fn write_error_table_csv<W: Write>(rows: &[(String, ErrorDecomposition)], writer: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["task", "fn", "retrieval_errors", "generation_errors", "gen_ret_ratio", "support_f1_pearson_r"])?;
    let opt = |v: Option<f64>, d: usize| v.map_or(String::new(), |x| format!("{x:.d$}"));
    for (task, d) in rows {
        w.write_record([
            task.clone(),
            d.fn_total.to_string(),
            d.retrieval_errors.to_string(),
            d.generation_errors.to_string(),
            opt(d.gen_ret_ratio, 2),
            opt(d.support_f1_pearson_r, 3),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_jsonl_inputs_agree() {
        let csv = "config_id,task_id,seed,macro_f1,micro_f1\na,dark,1,0.5,0.6\na,dark,2,0.7,0.8\n";
        let jsonl = "{\"config_id\":\"a\",\"task_id\":\"dark\",\"seed\":1,\"macro_f1\":0.5,\"micro_f1\":0.6}\n\
                     {\"config_id\":\"a\",\"task_id\":\"dark\",\"seed\":2,\"macro_f1\":0.7,\"micro_f1\":0.8}\n";
        assert_eq!(read_observations(csv.as_bytes()).unwrap(), read_observations(jsonl.as_bytes()).unwrap());
        let mut out = Vec::new();
        write_observations_csv(&read_observations(csv.as_bytes()).unwrap(), &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), csv);
    }

    #[test]
    fn out_of_range_rejected() {
        let csv = "config_id,task_id,seed,macro_f1,micro_f1\na,dark,1,1.5,0.6\n";
        assert!(matches!(read_observations(csv.as_bytes()), Err(EvalError::Invalid(_))));
    }

    #[test]
    fn breakdown_layout() {
        let csv = "method,task,seed,macro_f1,micro_f1\nsvm,dark,1,0.36,0.64\nsvm,dark,2,0.38,0.66\nsvm,gray,1,0.5,0.5\n";
        let mut out = Vec::new();
        write_breakdown_csv(&read_observations(csv.as_bytes()).unwrap(), 2, &mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), "method,dark Macro-F1,dark Micro-F1,gray Macro-F1,gray Micro-F1");
        assert_eq!(lines.next().unwrap(), "svm,0.37 ± 0.01,0.65 ± 0.01,0.50 ± 0.00,0.50 ± 0.00");
    }
}
