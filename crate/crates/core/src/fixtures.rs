//! Example data and the simulation scenarios built on them.

use crate::densities::DatasetSummary;
use crate::simkit::{ClusterSpec, ScenarioConfig};

/// Two-cluster continuous example: `(id, n, cluster center, mean, sd)`.
pub const TWO_CLUSTER_ROWS: [(&str, u64, f64, f64, f64); 12] = [
    ("Y1", 88, 0.2, 0.220, 0.560),
    ("Y2", 50, 0.6, 0.465, 0.230),
    ("Y3", 56, 0.2, 0.172, 1.559),
    ("Y4", 99, 0.6, 0.612, 0.071),
    ("Y5", 69, 0.6, 0.509, 0.129),
    ("Y6", 25, 0.2, 0.102, 1.715),
    ("Y7", 15, 0.6, 0.634, 0.461),
    ("Y8", 81, 0.6, 0.576, 1.265),
    ("Y9", 95, 0.6, 0.672, 0.687),
    ("Y10", 95, 0.2, 0.189, 0.446),
    ("Y11", 48, 0.6, 0.666, 1.224),
    ("Y12", 40, 0.2, 0.164, 0.360),
];

/// Nausea example, treatment arms: `(id, study, year, events, n)`.
pub const NAUSEA_ROWS: [(u32, &str, u32, u64, u64); 16] = [
    (1, "Agarwal", 2000, 18, 100),
    (2, "Agarwal", 2002, 5, 50),
    (3, "Alkaissi", 1999, 9, 20),
    (4, "Alkaissi", 2002, 32, 135),
    (5, "Allen", 1994, 9, 23),
    (6, "Andrzejowski", 1996, 11, 18),
    (7, "Duggal", 1998, 69, 122),
    (8, "Dundee", 1986, 3, 25),
    (9, "Ferrera-Love", 1996, 1, 30),
    (10, "Gieron", 1993, 11, 30),
    (11, "Harmon", 1999, 7, 44),
    (12, "Harmon", 2000, 4, 47),
    (13, "Ho", 1996, 1, 30),
    (14, "Rusy", 2002, 24, 40),
    (15, "Wang", 2002, 16, 50),
    (16, "Zarate", 2001, 28, 110),
];

pub const ONE_CLUSTER_SIZES: [u64; 10] = [17, 71, 62, 72, 57, 31, 71, 94, 57, 15];

pub const THREE_CLUSTER_SIZES: [u64; 25] = [
    39, 98, 25, 97, 63, 84, 57, 29, 76, 45, 61, 31, 58, 51, 68, 93, 20, 64, 17, 55, 94, 75, 86, 55,
    79,
];

pub fn two_cluster_data() -> Vec<DatasetSummary> {
    TWO_CLUSTER_ROWS
        .iter()
        .map(|&(id, n, _, mean, sd)| {
            DatasetSummary::continuous(id, n, mean, sd).expect("valid fixture")
        })
        .collect()
}

/// Source ids whose generating center is 0.2.
pub fn two_cluster_low_ids() -> Vec<&'static str> {
    TWO_CLUSTER_ROWS
        .iter()
        .filter(|r| r.2 < 0.4)
        .map(|r| r.0)
        .collect()
}

pub fn nausea_data() -> Vec<DatasetSummary> {
    NAUSEA_ROWS
        .iter()
        .map(|&(id, _, _, r, n)| {
            DatasetSummary::binary(id.to_string(), r, n).expect("valid fixture")
        })
        .collect()
}

const NEW_DATA_SIZES: [u64; 6] = [5, 10, 15, 20, 25, 30];

/// One center at 0.6; external data generated from the seed.
pub fn one_cluster_scenario() -> ScenarioConfig {
    ScenarioConfig {
        name: "one-cluster".into(),
        clusters: vec![ClusterSpec {
            center: 0.6,
            sd: 0.12,
            probability: 1.0,
        }],
        dataset_sizes: ONE_CLUSTER_SIZES.to_vec(),
        external: None,
        new_data_sizes: NEW_DATA_SIZES.to_vec(),
        trim: vec![0.05],
        ..ScenarioConfig::default()
    }
}

/// Centers 0.2 and 0.6 with the example external data replayed verbatim.
pub fn two_cluster_scenario() -> ScenarioConfig {
    ScenarioConfig {
        name: "two-cluster".into(),
        clusters: vec![
            ClusterSpec {
                center: 0.2,
                sd: 0.05,
                probability: 0.5,
            },
            ClusterSpec {
                center: 0.6,
                sd: 0.08,
                probability: 0.5,
            },
        ],
        dataset_sizes: TWO_CLUSTER_ROWS.iter().map(|r| r.1).collect(),
        external: Some(two_cluster_data().iter().map(Into::into).collect()),
        new_data_sizes: NEW_DATA_SIZES.to_vec(),
        inconsistent_theta: Some(0.4),
        trim: vec![0.05],
        ..ScenarioConfig::default()
    }
}

/// Centers 0.2, 0.6 and 1.0; external data generated from the seed.
pub fn three_cluster_scenario() -> ScenarioConfig {
    ScenarioConfig {
        name: "three-cluster".into(),
        clusters: vec![
            ClusterSpec {
                center: 0.2,
                sd: 0.12,
                probability: 0.3,
            },
            ClusterSpec {
                center: 0.6,
                sd: 0.10,
                probability: 0.3,
            },
            ClusterSpec {
                center: 1.0,
                sd: 0.15,
                probability: 0.4,
            },
        ],
        dataset_sizes: THREE_CLUSTER_SIZES.to_vec(),
        external: None,
        new_data_sizes: NEW_DATA_SIZES.to_vec(),
        trim: vec![0.05, 0.15],
        ..ScenarioConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cluster_sizes_per_center() {
        let low: u64 = TWO_CLUSTER_ROWS
            .iter()
            .filter(|r| r.2 < 0.4)
            .map(|r| r.1)
            .sum();
        let all: u64 = TWO_CLUSTER_ROWS.iter().map(|r| r.1).sum();
        assert_eq!((low, all), (304, 761));
        assert_eq!(two_cluster_low_ids(), ["Y1", "Y3", "Y6", "Y10", "Y12"]);
    }

    #[test]
    fn nausea_rows_valid() {
        let d = nausea_data();
        assert_eq!(d.len(), 16);
        assert_eq!(d[0].successes(), Some(18));
    }
}
