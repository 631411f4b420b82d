use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::manifest::{Split, UtteranceRecord};
use crate::lang::Lang;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Tally {
    pub seconds: f64,
    pub utterances: usize,
}

impl Tally {
    pub fn hours(&self) -> f64 {
        self.seconds / 3600.0
    }

    fn add(&mut self, other: &Tally) {
        self.seconds += other.seconds;
        self.utterances += other.utterances;
    }
}

/// Duration and count per (language, dataset, split).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusStats {
    pub cells: BTreeMap<(Lang, String, Split), Tally>,
}

impl CorpusStats {
    /// Totals over every dataset of `lang` in `split`.
    pub fn total(&self, lang: Lang, split: Split) -> Tally {
        let mut t = Tally::default();
        for ((l, _, s), cell) in &self.cells {
            if *l == lang && *s == split {
                t.add(cell);
            }
        }
        t
    }

    pub fn cell(&self, lang: Lang, dataset: &str, split: Split) -> Tally {
        self.cells
            .get(&(lang, dataset.to_string(), split))
            .copied()
            .unwrap_or_default()
    }

    pub fn languages(&self) -> Vec<Lang> {
        let mut langs: Vec<Lang> = self.cells.keys().map(|(l, _, _)| *l).collect();
        langs.dedup();
        langs
    }

    /// Per-language table with pretraining, train and test hours.
    pub fn render_overview(&self) -> String {
        let header = ["Language", "Pretraining", "Train Set", "Test Set"];
        let rows: Vec<[String; 4]> = self
            .languages()
            .into_iter()
            .map(|lang| {
                [
                    lang.title().to_string(),
                    format!(
                        "{} hrs",
                        format_hours(self.total(lang, Split::Pretrain).hours())
                    ),
                    format!(
                        "{} hrs",
                        format_hours(self.total(lang, Split::Train).hours())
                    ),
                    format!(
                        "{} hrs",
                        format_hours(self.total(lang, Split::Test).hours())
                    ),
                ]
            })
            .collect();
        render_table(&header, &rows)
    }

    /// Per-dataset train/validation hours for one language.
    pub fn render_splits(&self, lang: Lang) -> String {
        let header = [
            format!("{} Dataset", lang.title()),
            "Train Duration (hours)".to_string(),
            "Validation Duration (hours)".to_string(),
        ];
        let mut datasets: Vec<&str> = self
            .cells
            .keys()
            .filter(|(l, _, s)| *l == lang && s.is_labeled())
            .map(|(_, d, _)| d.as_str())
            .collect();
        datasets.dedup();
        let rows: Vec<[String; 3]> = datasets
            .into_iter()
            .map(|d| {
                [
                    d.to_string(),
                    format_hours(self.cell(lang, d, Split::Train).hours()),
                    format_hours(self.cell(lang, d, Split::Valid).hours()),
                ]
            })
            .collect();
        let header_refs = [header[0].as_str(), header[1].as_str(), header[2].as_str()];
        render_table(&header_refs, &rows)
    }

    /// `lang,dataset,split,hours,utterances` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lang,dataset,split,hours,utterances\n");
        for ((lang, dataset, split), t) in &self.cells {
            let _ = writeln!(
                out,
                "{lang},{dataset},{split},{:.6},{}",
                t.hours(),
                t.utterances
            );
        }
        out
    }
}

pub fn stats(records: &[UtteranceRecord]) -> CorpusStats {
    let mut cells: BTreeMap<(Lang, String, Split), Tally> = BTreeMap::new();
    for r in records {
        let cell = cells
            .entry((r.lang, r.dataset.clone(), r.split))
            .or_default();
        cell.seconds += r.duration_s;
        cell.utterances += 1;
    }
    CorpusStats { cells }
}

/// Hours with thousands separators and at most two decimals, trailing zeros
/// dropped: `816`, `1,310`, `4.23`.
pub fn format_hours(hours: f64) -> String {
    let cents = (hours * 100.0).round() as i64;
    let (whole, frac) = (cents / 100, cents % 100);
    let digits = whole.to_string();
    let mut grouped = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    match frac {
        0 => grouped,
        f if f % 10 == 0 => format!("{grouped}.{}", f / 10),
        f => format!("{grouped}.{f:02}"),
    }
}

pub(crate) fn render_table<const N: usize>(header: &[&str; N], rows: &[[String; N]]) -> String {
    let width = |i: usize| {
        rows.iter()
            .map(|r| r[i].chars().count())
            .chain(std::iter::once(header[i].chars().count()))
            .max()
            .unwrap_or(0)
    };
    let widths: Vec<usize> = (0..N).map(width).collect();
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            let pad = widths[i] - c.chars().count();
            if i == 0 {
                s.push_str(c);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str(&" ".repeat(pad));
                s.push_str(c);
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (N - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, dur: f64, split: Split) -> UtteranceRecord {
        UtteranceRecord {
            id: id.into(),
            audio_path: "x.wav".into(),
            duration_s: dur,
            lang: Lang::Urdu,
            dataset: "cv".into(),
            split,
            transcript: split.is_labeled().then(|| "t".to_string()),
            source_url: None,
        }
    }

    #[test]
    fn empty_manifest_is_all_zero() {
        let s = stats(&[]);
        assert_eq!(s.total(Lang::Urdu, Split::Train), Tally::default());
        assert!(s.cells.is_empty());
    }

    #[test]
    fn two_half_hours_make_one() {
        let s = stats(&[
            rec("a", 1800.0, Split::Train),
            rec("b", 1800.0, Split::Train),
        ]);
        let t = s.total(Lang::Urdu, Split::Train);
        assert!((t.hours() - 1.0).abs() < 1e-12);
        assert_eq!(t.utterances, 2);
    }

    #[test]
    fn hours_formatting() {
        assert_eq!(format_hours(816.0), "816");
        assert_eq!(format_hours(1310.0), "1,310");
        assert_eq!(format_hours(4.23), "4.23");
        assert_eq!(format_hours(7.7), "7.7");
        assert_eq!(format_hours(0.0), "0");
    }

    #[test]
    fn overview_layout() {
        let s = stats(&[
            rec("a", 7200.0, Split::Pretrain),
            rec("b", 3600.0, Split::Train),
            rec("c", 1800.0, Split::Test),
        ]);
        let table = s.render_overview();
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[0].starts_with("Language"));
        assert!(lines[0].contains("Pretraining") && lines[0].contains("Test Set"));
        let cols: Vec<&str> = lines[2].split_whitespace().collect();
        assert_eq!(cols, ["Urdu", "2", "hrs", "1", "hrs", "0.5", "hrs"]);
    }

    #[test]
    fn csv_rows() {
        let s = stats(&[rec("a", 36.0, Split::Train)]);
        assert_eq!(
            s.to_csv(),
            "lang,dataset,split,hours,utterances\nurdu,cv,train,0.010000,1\n"
        );
    }
}
