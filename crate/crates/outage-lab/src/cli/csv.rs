//! Fixed-schema CSV shared by every subcommand.
//!
//! One column layout serves all commands; fields a command does not produce
//! stay empty. Floats are written in Rust's shortest round-trip form, so
//! re-parsing a document reproduces the in-memory rows exactly.

/// Header line of every emitted document.
pub const HEADER: &str =
    "method,t,r,R,P,q1,q2,value,uncertainty,n_samples,seed,verdict,q_star,f_star,f_at_zero,f_at_half";

/// One record in the shared schema.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvRow {
    /// Producing operation or estimator token.
    pub method: String,
    /// Transmit antennas.
    pub t: Option<u32>,
    /// Receive antennas.
    pub r: Option<u32>,
    /// Target rate in nats.
    pub rate: Option<f64>,
    /// Total transmit power.
    pub power: Option<f64>,
    /// First power of the split under study.
    pub q1: Option<f64>,
    /// Second power of the split under study.
    pub q2: Option<f64>,
    /// Principal value of the row (probability, derivative, or margin).
    pub value: Option<f64>,
    /// Error bound, standard error, or decision margin for `value`.
    pub uncertainty: Option<f64>,
    /// Draws or integrand evaluations behind the row.
    pub n_samples: Option<u64>,
    /// Seed that reproduces the row, when randomness is involved.
    pub seed: Option<u64>,
    /// Verdict token, where the row carries one.
    pub verdict: Option<String>,
    /// Minimizing split found by a search.
    pub q_star: Option<f64>,
    /// Outage probability at `q_star`.
    pub f_star: Option<f64>,
    /// Outage probability at full concentration.
    pub f_at_zero: Option<f64>,
    /// Outage probability at the uniform split.
    pub f_at_half: Option<f64>,
}

fn push_f64(out: &mut String, v: Option<f64>) {
    out.push(',');
    if let Some(x) = v {
        debug_assert!(!x.is_nan(), "CSV rows never carry NaN");
        out.push_str(&format!("{x}"));
    }
}

impl CsvRow {
    /// Serializes the row as one CSV line without a trailing newline.
    pub fn to_line(&self) -> String {
        let mut out = String::with_capacity(128);
        out.push_str(&self.method);
        for v in [self.t, self.r] {
            out.push(',');
            if let Some(x) = v {
                out.push_str(&x.to_string());
            }
        }
        for v in [self.rate, self.power, self.q1, self.q2, self.value, self.uncertainty] {
            push_f64(&mut out, v);
        }
        for v in [self.n_samples, self.seed] {
            out.push(',');
            if let Some(x) = v {
                out.push_str(&x.to_string());
            }
        }
        out.push(',');
        if let Some(v) = &self.verdict {
            out.push_str(v);
        }
        for v in [self.q_star, self.f_star, self.f_at_zero, self.f_at_half] {
            push_f64(&mut out, v);
        }
        out
    }

    /// Parses one data line; empty fields become `None`.
    pub fn parse_line(line: &str) -> Result<CsvRow, String> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 16 {
            return Err(format!("expected 16 fields, got {}", fields.len()));
        }
        fn opt<T: std::str::FromStr>(s: &str, name: &str) -> Result<Option<T>, String>
        where
            T::Err: std::fmt::Display,
        {
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<T>()
                .map(Some)
                .map_err(|e| format!("bad {name} field {s:?}: {e}"))
        }
        Ok(CsvRow {
            method: fields[0].to_string(),
            t: opt(fields[1], "t")?,
            r: opt(fields[2], "r")?,
            rate: opt(fields[3], "R")?,
            power: opt(fields[4], "P")?,
            q1: opt(fields[5], "q1")?,
            q2: opt(fields[6], "q2")?,
            value: opt(fields[7], "value")?,
            uncertainty: opt(fields[8], "uncertainty")?,
            n_samples: opt(fields[9], "n_samples")?,
            seed: opt(fields[10], "seed")?,
            verdict: if fields[11].is_empty() {
                None
            } else {
                Some(fields[11].to_string())
            },
            q_star: opt(fields[12], "q_star")?,
            f_star: opt(fields[13], "f_star")?,
            f_at_zero: opt(fields[14], "f_at_zero")?,
            f_at_half: opt(fields[15], "f_at_half")?,
        })
    }
}

/// Renders a header plus one line per row, newline-terminated.
pub fn render_document(rows: &[CsvRow]) -> String {
    let mut out = String::with_capacity(64 + 128 * rows.len());
    out.push_str(HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_line());
        out.push('\n');
    }
    out
}

/// Parses a document produced by [`render_document`].
pub fn parse_document(text: &str) -> Result<Vec<CsvRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == HEADER => {}
        Some(h) => return Err(format!("unrecognized header {h:?}")),
        None => return Err("empty document".into()),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| CsvRow::parse_line(l).map_err(|e| format!("line {}: {e}", i + 2)))
        .collect()
}
