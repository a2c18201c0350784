//! Markdown rendering of the corruption table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::evaluate::SeedSummary;
use super::metrics::{aggregate_categories, format_percent, BenchmarkKind, Category, CategoryMean};
use crate::corruptions::CorruptionKind;

const SKIP_MARK: &str = "†";

fn model_label(name: &str) -> String {
    match name {
        "mlp_baseline" => "MLP".into(),
        "mapper_gin_base" => "Mapper-GIN-Base".into(),
        "mapper_gin" => "Mapper-GIN".into(),
        other => other.into(),
    }
}

fn model_rank(name: &str) -> usize {
    ["mlp_baseline", "mapper_gin_base", "mapper_gin"]
        .iter()
        .position(|m| *m == name)
        .unwrap_or(usize::MAX)
}

fn pm((mean, std): (f64, f64)) -> String {
    format!("{} ± {}", format_percent(mean), format_percent(std))
}

fn category_cell(c: &CategoryMean, any_skip: &mut bool) -> String {
    match c.mean {
        None => "–".into(),
        Some(m) if c.skipped.is_empty() => format_percent(m),
        Some(m) => {
            *any_skip = true;
            format!("{}{SKIP_MARK}", format_percent(m))
        }
    }
}

struct Family {
    title: &'static str,
    kinds: Vec<BenchmarkKind>,
    overall: Category,
}

fn families() -> Vec<Family> {
    use BenchmarkKind::{Generated as G, Lidar, Occlusion};
    use CorruptionKind::*;
    vec![
        Family {
            title: "Density",
            kinds: vec![Occlusion, Lidar, G(DensityInc), G(DensityDec), G(Cutout)],
            overall: Category::Density,
        },
        Family {
            title: "Noise",
            kinds: vec![
                G(Uniform),
                G(Gaussian),
                G(Impulse),
                G(Upsampling),
                G(Background),
            ],
            overall: Category::Noise,
        },
        Family {
            title: "Transformation",
            kinds: vec![G(Rotation), G(Shear), G(Ffd), G(Rbf), G(InvRbf)],
            overall: Category::Transformation,
        },
    ]
}

/// Kinds × models grid (mean ± std in percent over seeds) with family and
/// overall averages, followed by the category summary.
pub fn render_markdown(models: &BTreeMap<String, SeedSummary>) -> String {
    let mut names: Vec<&String> = models.keys().collect();
    names.sort_by_key(|n| (model_rank(n), n.as_str()));
    let aggregates: Vec<Vec<CategoryMean>> = names
        .iter()
        .map(|n| aggregate_categories(&models[*n].kind_means()))
        .collect();
    let agg = |m: usize, c: Category| {
        aggregates[m]
            .iter()
            .find(|x| x.category == c)
            .expect("all categories")
    };
    let mut any_skip = false;
    let mut out = String::new();

    let header: Vec<String> = names.iter().map(|n| model_label(n)).collect();
    writeln!(out, "| Category | Corruption | {} |", header.join(" | ")).unwrap();
    writeln!(out, "|---|---|{}", "---:|".repeat(names.len())).unwrap();
    let clean: Vec<String> = names
        .iter()
        .map(|n| models[*n].clean().map_or("–".into(), pm))
        .collect();
    writeln!(out, "| **Clean** | | {} |", clean.join(" | ")).unwrap();
    for family in families() {
        for (i, kind) in family.kinds.iter().enumerate() {
            let title = if i == 0 {
                format!(" **{}** ", family.title)
            } else {
                " ".into()
            };
            let cells: Vec<String> = names
                .iter()
                .map(|n| models[*n].kind(*kind).map_or("–".into(), pm))
                .collect();
            writeln!(out, "|{title}| {} | {} |", kind.label(), cells.join(" | ")).unwrap();
        }
        let cells: Vec<String> = (0..names.len())
            .map(|m| category_cell(agg(m, family.overall), &mut any_skip))
            .collect();
        writeln!(
            out,
            "| | Overall ({}) | {} |",
            family.title,
            cells.join(" | ")
        )
        .unwrap();
    }
    let cells: Vec<String> = (0..names.len())
        .map(|m| category_cell(agg(m, Category::Overall), &mut any_skip))
        .collect();
    writeln!(out, "| **Overall** | | {} |", cells.join(" | ")).unwrap();

    let summary = [
        Category::Hard,
        Category::DensityStar,
        Category::NoiseStar,
        Category::Transformation,
        Category::Overall,
    ];
    writeln!(out).unwrap();
    let labels: Vec<&str> = summary.iter().map(|c| c.label()).collect();
    writeln!(out, "| Model | Clean | {} |", labels.join(" | ")).unwrap();
    writeln!(out, "|---|---:|{}", "---:|".repeat(summary.len())).unwrap();
    for (m, name) in names.iter().enumerate() {
        let clean = models[*name]
            .clean()
            .map_or("–".into(), |(c, _)| format_percent(c));
        let cells: Vec<String> = summary
            .iter()
            .map(|c| category_cell(agg(m, *c), &mut any_skip))
            .collect();
        writeln!(
            out,
            "| {} | {clean} | {} |",
            model_label(name),
            cells.join(" | ")
        )
        .unwrap();
    }

    if any_skip {
        let mut skipped: Vec<BenchmarkKind> = aggregates
            .iter()
            .flat_map(|a| a.iter().flat_map(|c| c.skipped.iter().copied()))
            .collect();
        skipped.sort();
        skipped.dedup();
        let names: Vec<&str> = skipped.iter().map(|k| k.label()).collect();
        writeln!(
            out,
            "\n{SKIP_MARK} Averaged over the corruptions present; not evaluated: {}.",
            names.join(", ")
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train_eval::evaluate::MetricsTable;

    fn summary(values: &[(BenchmarkKind, f64)]) -> SeedSummary {
        let mut t = MetricsTable {
            clean: 0.9,
            ..Default::default()
        };
        for &(k, v) in values {
            for s in 1..=5 {
                t.cells.insert((k, s), v);
            }
        }
        SeedSummary {
            runs: [(1, t)].into_iter().collect(),
        }
    }

    #[test]
    fn missing_kinds_are_dashed_and_footnoted() {
        let models: BTreeMap<_, _> = [(
            "mapper_gin".to_string(),
            summary(&[
                (CorruptionKind::Background.into(), 0.5),
                (CorruptionKind::Cutout.into(), 0.75),
            ]),
        )]
        .into_iter()
        .collect();
        let md = render_markdown(&models);
        assert!(md.contains("| | LiDAR | – |"), "{md}");
        assert!(md.contains("| | Overall (Noise) | 50.0† |"), "{md}");
        assert!(md.contains("not evaluated: Occlusion, LiDAR"), "{md}");
        assert!(md.contains("| **Clean** | | 90.0 ± 0.0 |"), "{md}");
    }

    #[test]
    fn columns_follow_model_order() {
        let models: BTreeMap<_, _> = ["mapper_gin", "mlp_baseline"]
            .iter()
            .map(|n| (n.to_string(), summary(&[])))
            .collect();
        let md = render_markdown(&models);
        assert!(
            md.starts_with("| Category | Corruption | MLP | Mapper-GIN |"),
            "{md}"
        );
    }
}
