//! Matrix CSV, DOT and GraphML writers.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::DMatrix;

use crate::error::{Result, TnaError};

/// Fixed-point rendering with at least 12 (here 15) significant digits.
pub fn format_decimal(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    if v.fract() == 0.0 && v.abs() < 1e15 {
        return format!("{v:.0}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (14 - magnitude).clamp(0, 320) as usize;
    let s = format!("{v:.decimals$}");
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Square matrix with a header row and a leading label column. Lines in
/// `comments` are written first, each prefixed with `# `.
pub fn write_matrix_csv<W: Write>(mut w: W, labels: &[String], matrix: &DMatrix<f64>, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    let header: Vec<String> = std::iter::once(String::new()).chain(labels.iter().map(|l| csv_field(l))).collect();
    writeln!(w, "{}", header.join(","))?;
    for (i, l) in labels.iter().enumerate() {
        let row: Vec<String> = std::iter::once(csv_field(l))
            .chain((0..labels.len()).map(|j| format_decimal(matrix[(i, j)])))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads a matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv<R: Read>(r: R) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(r));
    let labels: Vec<String> = rdr.headers()?.iter().skip(1).map(String::from).collect();
    let n = labels.len();
    let mut m = DMatrix::zeros(n, n);
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rows >= n || rec.get(0) != Some(labels[rows].as_str()) {
            return Err(TnaError::Row {
                line,
                message: "matrix rows must follow the header label order".into(),
            });
        }
        for j in 0..n {
            let raw = rec.get(j + 1).unwrap_or("");
            m[(rows, j)] = raw.parse().map_err(|_| TnaError::Row {
                line,
                message: format!("bad matrix entry `{raw}`"),
            })?;
        }
        rows += 1;
    }
    if rows != n || n == 0 {
        return Err(TnaError::Empty(format!("matrix has {rows} rows for {n} labels")));
    }
    Ok((labels, m))
}

/// Reads leading `# ` comment lines (e.g. provenance) from a text export.
pub fn read_comments<R: Read>(r: R) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in BufReader::new(r).lines() {
        let line = line?;
        match line.strip_prefix("# ").or_else(|| line.strip_prefix("// ")) {
            Some(c) => out.push(c.to_string()),
            None => break,
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct DotOptions {
    pub name: String,
    /// Written as `//` comment lines before the graph.
    pub comments: Vec<String>,
    /// Initial probability per node, emitted as a `pie` attribute.
    pub initial: Option<Vec<f64>>,
    /// Signed labels and colours for difference networks.
    pub signed: bool,
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Directed graph with edge labels rounded to two decimals.
pub fn write_dot<W: Write>(mut w: W, labels: &[String], edges: &[(usize, usize, f64)], opts: &DotOptions) -> Result<()> {
    for c in &opts.comments {
        writeln!(w, "// {c}")?;
    }
    let name = if opts.name.is_empty() { "tna" } else { &opts.name };
    writeln!(w, "digraph {} {{", dot_id(name))?;
    writeln!(w, "  node [shape=circle];")?;
    for (i, l) in labels.iter().enumerate() {
        match &opts.initial {
            Some(init) => writeln!(
                w,
                "  {} [label={}, pie=\"{:.2}\", initial=\"{}\"];",
                dot_id(l),
                dot_id(l),
                init[i],
                format_decimal(init[i])
            )?,
            None => writeln!(w, "  {} [label={}];", dot_id(l), dot_id(l))?,
        }
    }
    let max = edges.iter().map(|e| e.2.abs()).fold(0.0, f64::max);
    for &(i, j, v) in edges {
        let width = if max > 0.0 { 0.5 + 4.5 * v.abs() / max } else { 1.0 };
        if opts.signed {
            let color = if v >= 0.0 { "darkgreen" } else { "firebrick" };
            writeln!(
                w,
                "  {} -> {} [label=\"{:+.2}\", value=\"{}\", color={color}, penwidth={width:.2}];",
                dot_id(&labels[i]),
                dot_id(&labels[j]),
                v,
                format_decimal(v)
            )?;
        } else {
            writeln!(
                w,
                "  {} -> {} [label=\"{:.2}\", value=\"{}\", penwidth={width:.2}];",
                dot_id(&labels[i]),
                dot_id(&labels[j]),
                v,
                format_decimal(v)
            )?;
        }
    }
    writeln!(w, "}}")?;
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn write_graphml<W: Write>(
    mut w: W,
    labels: &[String],
    initial: Option<&[f64]>,
    edges: &[(usize, usize, f64)],
    comments: &[String],
) -> Result<()> {
    writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    for c in comments {
        writeln!(w, "<!-- {} -->", c.replace("--", "- -"))?;
    }
    writeln!(w, r#"<graphml xmlns="http://graphml.graphdrawing.org/xmlns">"#)?;
    writeln!(w, r#"  <key id="label" for="node" attr.name="label" attr.type="string"/>"#)?;
    writeln!(w, r#"  <key id="initial" for="node" attr.name="initial" attr.type="double"/>"#)?;
    writeln!(w, r#"  <key id="weight" for="edge" attr.name="weight" attr.type="double"/>"#)?;
    writeln!(w, r#"  <graph id="tna" edgedefault="directed">"#)?;
    for (i, l) in labels.iter().enumerate() {
        write!(w, r#"    <node id="n{i}"><data key="label">{}</data>"#, xml_escape(l))?;
        if let Some(init) = initial {
            write!(w, r#"<data key="initial">{}</data>"#, format_decimal(init[i]))?;
        }
        writeln!(w, "</node>")?;
    }
    for (e, &(i, j, v)) in edges.iter().enumerate() {
        writeln!(
            w,
            r#"    <edge id="e{e}" source="n{i}" target="n{j}"><data key="weight">{}</data></edge>"#,
            format_decimal(v)
        )?;
    }
    writeln!(w, "  </graph>")?;
    writeln!(w, "</graphml>")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decimals_keep_precision() {
        assert_eq!(format_decimal(0.5), "0.5");
        assert_eq!(format_decimal(1.0), "1");
        assert_eq!(format_decimal(1.0 / 3.0), "0.333333333333333");
        assert_eq!(format_decimal(0.000123456789012345), "0.000123456789012345");
    }

    proptest! {
        #[test]
        fn matrix_csv_round_trip(values in proptest::collection::vec(0.0f64..1.0, 9)) {
            let labels: Vec<String> = ["a", "b,c", "d\"e"].iter().map(|s| s.to_string()).collect();
            let m = DMatrix::from_row_slice(3, 3, &values);
            let mut buf = Vec::new();
            write_matrix_csv(&mut buf, &labels, &m, &["seed=1".into()]).unwrap();
            let (l2, m2) = read_matrix_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(&l2, &labels);
            for (a, b) in m.iter().zip(m2.iter()) {
                prop_assert!((a - b).abs() <= 1e-13 * a.abs().max(1e-3));
            }
            prop_assert_eq!(read_comments(buf.as_slice()).unwrap(), vec!["seed=1".to_string()]);
        }
    }

    #[test]
    fn dot_has_labels_and_pies() {
        let labels = vec!["plan".to_string(), "ex\"plore".to_string()];
        let mut buf = Vec::new();
        let opts = DotOptions {
            initial: Some(vec![0.25, 0.75]),
            comments: vec!["seed=3".into()],
            ..Default::default()
        };
        write_dot(&mut buf, &labels, &[(0, 1, 0.333)], &opts).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("// seed=3\n"));
        assert!(s.contains(r#""plan" -> "ex\"plore" [label="0.33""#), "{s}");
        assert!(s.contains(r#"pie="0.25""#));
    }

    #[test]
    fn signed_dot_labels() {
        let labels = vec!["a".to_string(), "b".to_string()];
        let mut buf = Vec::new();
        let opts = DotOptions { signed: true, ..Default::default() };
        write_dot(&mut buf, &labels, &[(0, 1, 0.22), (1, 0, -0.1)], &opts).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.contains(r#"label="+0.22""#) && s.contains(r#"label="-0.10""#), "{s}");
    }

    #[test]
    fn graphml_escapes() {
        let mut buf = Vec::new();
        write_graphml(&mut buf, &["a<b".to_string()], Some(&[1.0]), &[(0, 0, 1.0)], &[]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.contains("a&lt;b") && s.contains(r#"source="n0" target="n0""#));
    }
}
