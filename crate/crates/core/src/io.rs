//! File formats: binary and CSV embeddings, prediction CSV, fairness report
//! JSON, and the CSV exports for plans, masks, and loss traces. Byte layouts
//! are normative; readers reject malformed input without yielding partial
//! values.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fairness::FairnessReport;
use crate::graph::EmbeddingSet;
use crate::ot::TransportPlan;

/// Magic bytes opening a binary embedding file.
pub const EMBEDDING_MAGIC: [u8; 4] = *b"EMB1";

/// On-disk representation of an embedding set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    /// `EMB1` magic, u32-LE dims, f32-LE row-major payload, then one
    /// newline-terminated UTF-8 id per row.
    Binary,
    /// Header `id,dim0,...,dimK`, one row per vector, 9 significant digits.
    Csv,
}

impl EmbeddingFormat {
    /// Picks the format from a file extension: `.csv` means CSV, anything
    /// else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => EmbeddingFormat::Csv,
            _ => EmbeddingFormat::Binary,
        }
    }
}

/// Formats `value` with `sig` significant digits in plain decimal notation,
/// trimming trailing zeros.
pub fn fmt_sig(value: f64, sig: usize) -> String {
    assert!((1..=17).contains(&sig));
    if value == 0.0 {
        return "0".to_string();
    }
    debug_assert!(value.is_finite());
    let formatted = format!("{:.*e}", sig - 1, value);
    let (mantissa, exp) = formatted
        .split_once('e')
        .expect("scientific format always has an exponent");
    let exp: i32 = exp.parse().expect("valid exponent");
    let neg = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let trimmed = digits.trim_end_matches('0');
    let trimmed = if trimmed.is_empty() { "0" } else { trimmed };
    let point = exp + 1; // digits before the decimal point
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    if point <= 0 {
        out.push_str("0.");
        for _ in 0..(-point) {
            out.push('0');
        }
        out.push_str(trimmed);
    } else if point as usize >= trimmed.len() {
        out.push_str(trimmed);
        for _ in 0..(point as usize - trimmed.len()) {
            out.push('0');
        }
    } else {
        out.push_str(&trimmed[..point as usize]);
        out.push('.');
        out.push_str(&trimmed[point as usize..]);
    }
    out
}

fn check_id_for_text(id: &str, context: &'static str) -> Result<()> {
    if id.contains(',') || id.contains('\n') || id.contains('\r') {
        return Err(Error::InvalidValue {
            context,
            message: format!("id {id:?} contains a separator character"),
        });
    }
    Ok(())
}

/// Writes an embedding set. Binary payloads are f32; values beyond f32
/// precision are narrowed.
pub fn write_embeddings(e: &EmbeddingSet, path: &Path, format: EmbeddingFormat) -> Result<()> {
    match format {
        EmbeddingFormat::Binary => {
            let n = e.len();
            let d = e.dim();
            let mut bytes = Vec::with_capacity(12 + 4 * n * d + 8 * n);
            bytes.extend_from_slice(&EMBEDDING_MAGIC);
            bytes.extend_from_slice(&u32::try_from(n).map_err(|_| Error::InvalidValue {
                context: "binary embeddings",
                message: format!("{n} rows exceed the u32 header field"),
            })?.to_le_bytes());
            bytes.extend_from_slice(&u32::try_from(d).map_err(|_| Error::InvalidValue {
                context: "binary embeddings",
                message: format!("{d} columns exceed the u32 header field"),
            })?.to_le_bytes());
            for &x in e.vectors() {
                bytes.extend_from_slice(&(x as f32).to_le_bytes());
            }
            for id in e.ids() {
                if id.contains('\n') || id.contains('\r') {
                    return Err(Error::InvalidValue {
                        context: "binary embeddings",
                        message: format!("id {id:?} contains a newline"),
                    });
                }
                bytes.extend_from_slice(id.as_bytes());
                bytes.push(b'\n');
            }
            fs::write(path, bytes)?;
        }
        EmbeddingFormat::Csv => {
            let mut out = String::new();
            out.push_str("id");
            for k in 0..e.dim() {
                out.push_str(&format!(",dim{k}"));
            }
            out.push('\n');
            for (id, row) in e.ids().iter().zip(e.vectors().outer_iter()) {
                check_id_for_text(id, "csv embeddings")?;
                out.push_str(id);
                for &x in row {
                    out.push(',');
                    out.push_str(&fmt_sig(x, 9));
                }
                out.push('\n');
            }
            fs::write(path, out)?;
        }
    }
    Ok(())
}

/// Reads an embedding set, rejecting malformed input in full.
pub fn read_embeddings(path: &Path, format: EmbeddingFormat) -> Result<EmbeddingSet> {
    match format {
        EmbeddingFormat::Binary => read_embeddings_binary(&fs::read(path)?),
        EmbeddingFormat::Csv => read_embeddings_csv(&fs::read_to_string(path)?),
    }
}

fn read_embeddings_binary(bytes: &[u8]) -> Result<EmbeddingSet> {
    if bytes.len() < 12 {
        return Err(Error::Truncated {
            context: format!("header needs 12 bytes, file has {}", bytes.len()),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("sliced four bytes");
    if magic != EMBEDDING_MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().expect("four bytes")) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().expect("four bytes")) as usize;
    if n == 0 || d == 0 {
        return Err(Error::InvalidValue {
            context: "binary embeddings",
            message: format!("header declares {n}x{d}, both dims must be at least 1"),
        });
    }
    let payload_len = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::InvalidValue {
            context: "binary embeddings",
            message: "header dimensions overflow".to_string(),
        })?;
    if bytes.len() < 12 + payload_len {
        return Err(Error::Truncated {
            context: format!(
                "numeric payload needs {} bytes, {} available",
                payload_len,
                bytes.len() - 12
            ),
        });
    }
    let mut values = Vec::with_capacity(n * d);
    for chunk in bytes[12..12 + payload_len].chunks_exact(4) {
        let x = f32::from_le_bytes(chunk.try_into().expect("four bytes")) as f64;
        values.push(x);
    }
    let vectors = Array2::from_shape_vec((n, d), values).expect("length checked");
    let mut ids = Vec::with_capacity(n);
    let mut rest = &bytes[12 + payload_len..];
    for row in 0..n {
        let split = rest.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Truncated {
            context: format!("id block ends before row {row}"),
        })?;
        let id = std::str::from_utf8(&rest[..split]).map_err(|_| Error::Parse {
            line: row + 1,
            message: "id is not valid UTF-8".to_string(),
        })?;
        ids.push(id.to_string());
        rest = &rest[split + 1..];
    }
    if !rest.is_empty() {
        return Err(Error::InvalidValue {
            context: "binary embeddings",
            message: format!("{} trailing bytes after the id block", rest.len()),
        });
    }
    EmbeddingSet::new(ids, vectors)
}

fn read_embeddings_csv(text: &str) -> Result<EmbeddingSet> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::EmptyInput {
        context: "embedding csv",
    })?;
    let header = header.trim_end_matches('\r');
    let fields: Vec<&str> = header.split(',').collect();
    if fields.first() != Some(&"id") || fields.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header id,dim0,...  got {header:?}"),
        });
    }
    for (k, field) in fields[1..].iter().enumerate() {
        if *field != format!("dim{k}") {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected column dim{k}, got {field:?}"),
            });
        }
    }
    let d = fields.len() - 1;
    let mut ids = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    for (idx, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != d + 1 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected {} fields, got {}", d + 1, parts.len()),
            });
        }
        if parts[0].is_empty() {
            return Err(Error::Parse {
                line: idx + 1,
                message: "empty id".to_string(),
            });
        }
        ids.push(parts[0].to_string());
        for part in &parts[1..] {
            let x: f64 = part.parse().map_err(|_| Error::Parse {
                line: idx + 1,
                message: format!("{part:?} is not a number"),
            })?;
            if !x.is_finite() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("non-finite value {part:?}"),
                });
            }
            rows.push(x);
        }
    }
    if ids.is_empty() {
        return Err(Error::EmptyInput {
            context: "embedding csv",
        });
    }
    let vectors = Array2::from_shape_vec((ids.len(), d), rows).expect("row widths checked");
    EmbeddingSet::new(ids, vectors)
}

/// Exact header required of a prediction CSV.
pub const PREDICTIONS_HEADER: &str = "sample_id,group,true_label,pred_label";

/// Reads prediction records, preserving file order.
pub fn read_predictions(path: &Path) -> Result<Vec<crate::fairness::PredictionRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::EmptyInput {
        context: "prediction csv",
    })?;
    if header.trim_end_matches('\r') != PREDICTIONS_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {PREDICTIONS_HEADER:?}, got {header:?}"),
        });
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected 4 fields, got {}", parts.len()),
            });
        }
        for (name, value) in ["sample_id", "group", "true_label", "pred_label"]
            .iter()
            .zip(&parts)
        {
            if value.is_empty() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("empty {name} field"),
                });
            }
        }
        records.push(
            crate::fairness::PredictionRecord::new(parts[0], parts[1], parts[2], parts[3])
                .map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: e.to_string(),
                })?,
        );
    }
    if records.is_empty() {
        return Err(Error::EmptyInput {
            context: "prediction csv",
        });
    }
    Ok(records)
}

fn json_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

fn json_string_array(items: &[String]) -> String {
    let inner: Vec<String> = items.iter().map(|s| format!("\"{}\"", json_escape(s))).collect();
    format!("[{}]", inner.join(", "))
}

/// Serializes a fairness report with a fixed key order and numbers rendered
/// with up to 12 significant digits.
pub fn write_report(report: &FairnessReport, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str("  \"per_group_accuracy\": {");
    let groups: Vec<String> = report
        .per_group_accuracy
        .iter()
        .map(|(g, a)| format!("\"{}\": {}", json_escape(g), fmt_sig(*a, 12)))
        .collect();
    out.push_str(&groups.join(", "));
    out.push_str("},\n");
    out.push_str(&format!("  \"pqd\": {},\n", fmt_sig(report.pqd, 12)));
    out.push_str(&format!("  \"dpm\": {},\n", fmt_sig(report.dpm, 12)));
    out.push_str(&format!("  \"eom\": {},\n", fmt_sig(report.eom, 12)));
    out.push_str(&format!(
        "  \"dpm_skipped_classes\": {},\n",
        json_string_array(&report.dpm_skipped_classes)
    ));
    out.push_str(&format!(
        "  \"eom_skipped_classes\": {},\n",
        json_string_array(&report.eom_skipped_classes)
    ));
    out.push_str(&format!("  \"n_records\": {}\n", report.n_records));
    out.push_str("}\n");
    fs::write(path, out)?;
    Ok(())
}

#[derive(Deserialize)]
struct ReportDoc {
    per_group_accuracy: BTreeMap<String, f64>,
    pqd: f64,
    dpm: f64,
    eom: f64,
    dpm_skipped_classes: Vec<String>,
    eom_skipped_classes: Vec<String>,
    n_records: usize,
}

/// Reads a report back; the inverse of [`write_report`] up to the 12
/// significant digits of its number encoding.
pub fn read_report(path: &Path) -> Result<FairnessReport> {
    let text = fs::read_to_string(path)?;
    let doc: ReportDoc = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    Ok(FairnessReport {
        per_group_accuracy: doc.per_group_accuracy,
        pqd: doc.pqd,
        dpm: doc.dpm,
        eom: doc.eom,
        dpm_skipped_classes: doc.dpm_skipped_classes,
        eom_skipped_classes: doc.eom_skipped_classes,
        n_records: doc.n_records,
    })
}

/// Writes a transport plan as `src_id,dst_id,mass` rows sorted by the id
/// pair.
pub fn write_plan_csv(
    plan: &TransportPlan,
    src_ids: &[String],
    dst_ids: &[String],
    path: &Path,
) -> Result<()> {
    let values = plan.values();
    if src_ids.len() != values.nrows() || dst_ids.len() != values.ncols() {
        return Err(Error::DimensionMismatch {
            context: "plan ids vs plan shape",
            expected: format!("{}x{}", values.nrows(), values.ncols()),
            got: format!("{}x{}", src_ids.len(), dst_ids.len()),
        });
    }
    for id in src_ids.iter().chain(dst_ids) {
        check_id_for_text(id, "plan csv")?;
    }
    let mut rows: Vec<(usize, usize)> = (0..values.nrows())
        .flat_map(|i| (0..values.ncols()).map(move |j| (i, j)))
        .collect();
    rows.sort_by(|&(i1, j1), &(i2, j2)| {
        (src_ids[i1].as_str(), dst_ids[j1].as_str()).cmp(&(src_ids[i2].as_str(), dst_ids[j2].as_str()))
    });
    let mut out = String::from("src_id,dst_id,mass\n");
    for (i, j) in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            src_ids[i],
            dst_ids[j],
            fmt_sig(values[(i, j)], 9)
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes per-id weights as `id,weight` with 9 significant digits.
pub fn write_weight_csv(ids: &[String], weights: &[f64], path: &Path) -> Result<()> {
    if ids.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            context: "weight csv",
            expected: format!("{}", ids.len()),
            got: format!("{}", weights.len()),
        });
    }
    let mut out = String::from("id,weight\n");
    for (id, &w) in ids.iter().zip(weights) {
        check_id_for_text(id, "weight csv")?;
        out.push_str(&format!("{},{}\n", id, fmt_sig(w, 9)));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads `id,weight` rows in file order.
pub fn read_weight_csv(path: &Path) -> Result<Vec<(String, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::EmptyInput {
        context: "weight csv",
    })?;
    if header.trim_end_matches('\r') != "id,weight" {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header \"id,weight\", got {header:?}"),
        });
    }
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let (id, weight) = line.split_once(',').ok_or_else(|| Error::Parse {
            line: idx + 1,
            message: "expected 2 fields".to_string(),
        })?;
        if id.is_empty() {
            return Err(Error::Parse {
                line: idx + 1,
                message: "empty id".to_string(),
            });
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateId { id: id.to_string() });
        }
        let w: f64 = weight.parse().map_err(|_| Error::Parse {
            line: idx + 1,
            message: format!("{weight:?} is not a number"),
        })?;
        if !w.is_finite() {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("non-finite weight {weight:?}"),
            });
        }
        out.push((id.to_string(), w));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput {
            context: "weight csv",
        });
    }
    Ok(out)
}

/// Writes a per-epoch objective trace as `epoch,objective`.
pub fn write_trace_csv(values: &[f64], path: &Path) -> Result<()> {
    let mut file = fs::File::create(path)?;
    let mut out = String::from("epoch,objective\n");
    for (epoch, &v) in values.iter().enumerate() {
        out.push_str(&format!("{},{}\n", epoch, fmt_sig(v, 12)));
    }
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Writes the synthetic ground-truth mapping as `patch_id,source`.
pub fn write_truth_csv(pairs: &[(String, String)], path: &Path) -> Result<()> {
    let mut out = String::from("patch_id,source\n");
    for (id, source) in pairs {
        check_id_for_text(id, "truth csv")?;
        check_id_for_text(source, "truth csv")?;
        out.push_str(&format!("{id},{source}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}
