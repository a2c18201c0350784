//! Published per-corruption accuracies (mean over severities and five runs)
//! and their category aggregates.

use std::collections::BTreeMap;

use mapper_gin::train_eval::{aggregate_categories, round_half_up, BenchmarkKind, Category};

/// Per-kind values in `BenchmarkKind::ALL` order.
pub struct Column {
    pub model: &'static str,
    pub clean: f64,
    pub kinds: [f64; 15],
    /// Hard, Density*, Noise*, Transformation, Overall.
    pub summary: [f64; 5],
    /// Overall (Density), Overall (Noise).
    pub families: [f64; 2],
}

pub const COLUMNS: [Column; 5] = [
    Column {
        model: "MLP",
        clean: 86.3,
        kinds: [
            49.2, 48.9, 85.5, 84.7, 83.6, 85.2, 85.1, 79.8, 84.9, 19.1, 63.7, 64.4, 70.8, 81.8,
            82.0,
        ],
        summary: [39.1, 84.6, 83.8, 72.5, 71.2],
        families: [70.4, 70.8],
    },
    Column {
        model: "PointNet",
        clean: 86.6,
        kinds: [
            41.7, 39.5, 86.1, 85.2, 84.5, 86.0, 85.8, 81.7, 85.7, 24.6, 67.5, 70.0, 73.4, 83.1,
            83.4,
        ],
        summary: [35.2, 85.3, 84.8, 75.5, 71.9],
        families: [67.4, 72.8],
    },
    Column {
        model: "PointNet++",
        clean: 86.9,
        kinds: [
            44.6, 37.3, 83.7, 82.1, 83.0, 84.8, 83.6, 78.4, 84.7, 79.5, 77.0, 79.6, 80.1, 83.6,
            83.9,
        ],
        summary: [53.8, 82.9, 82.9, 80.9, 76.4],
        families: [66.1, 82.2],
    },
    Column {
        model: "Mapper-GIN-Base",
        clean: 85.7,
        kinds: [
            42.7, 42.7, 67.8, 61.7, 65.1, 81.7, 68.1, 76.4, 80.7, 16.2, 71.6, 71.6, 74.5, 78.1,
            78.6,
        ],
        summary: [33.9, 64.9, 76.7, 74.9, 65.2],
        families: [56.0, 64.6],
    },
    Column {
        model: "Mapper-GIN",
        clean: 87.1,
        kinds: [
            44.8, 46.7, 85.2, 80.7, 82.5, 85.3, 85.1, 83.7, 85.2, 53.3, 75.5, 75.9, 76.0, 83.2,
            83.0,
        ],
        summary: [48.3, 82.8, 84.8, 78.7, 75.1],
        families: [68.0, 78.5],
    },
];

pub const SUMMARY: [Category; 5] = [
    Category::Hard,
    Category::DensityStar,
    Category::NoiseStar,
    Category::Transformation,
    Category::Overall,
];

/// Published aggregates that disagree with the mean of the published
/// per-kind values after rounding: (model, category, recomputed).
pub const ROUNDING_CONFLICTS: [(&str, Category, f64); 2] = [
    ("PointNet", Category::Hard, 35.3),
    ("PointNet++", Category::Transformation, 80.8),
];

pub fn column(model: &str) -> &'static Column {
    COLUMNS
        .iter()
        .find(|c| c.model == model)
        .expect("known column")
}

pub fn kind_values(c: &Column) -> BTreeMap<BenchmarkKind, f64> {
    BenchmarkKind::ALL.iter().copied().zip(c.kinds).collect()
}

/// Rounded aggregate of `category` for a column.
pub fn aggregate(c: &Column, category: Category) -> f64 {
    let agg = aggregate_categories(&kind_values(c));
    let m = agg
        .iter()
        .find(|a| a.category == category)
        .expect("category present");
    round_half_up(m.mean.expect("all kinds present"), 1)
}

/// Published value of `category` for a column.
pub fn published(c: &Column, category: Category) -> f64 {
    match category {
        Category::Density => c.families[0],
        Category::Noise => c.families[1],
        other => {
            c.summary[SUMMARY
                .iter()
                .position(|s| *s == other)
                .expect("summary category")]
        }
    }
}
