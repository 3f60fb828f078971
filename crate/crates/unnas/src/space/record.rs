//! Serialized architecture records: the envelope format shared by pools,
//! stores and logs (one JSON object per line) and the per-architecture
//! result record of sampling studies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::nn::CostStats;

use super::bench::BenchGraph;
use super::genotype::Genotype;
use super::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// An architecture from either search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "space", content = "payload", rename_all = "snake_case")]
pub enum ArchPayload {
    Darts(Genotype),
    Bench(BenchGraph),
}

impl ArchPayload {
    /// Stable identifier: content hash for cells, canonical (isomorphism
    /// invariant) hash for benchmark graphs.
    pub fn arch_id(&self) -> String {
        match self {
            ArchPayload::Darts(g) => {
                let json = serde_json::to_string(g).expect("genotype serializes");
                let mut hasher = Sha256::new();
                hasher.update(json.as_bytes());
                let digest = hasher.finalize();
                let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
                format!("d-{hex}")
            }
            ArchPayload::Bench(g) => format!("b-{}", g.canonical_hash()),
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        match self {
            ArchPayload::Darts(g) => g.validate(),
            ArchPayload::Bench(g) => {
                if g.is_valid() {
                    Ok(())
                } else {
                    Err(Error::InvalidBenchGraph {
                        reason: "benchmark graph invariants violated".to_string(),
                    })
                }
            }
        }
    }
}

/// Line format for serialized architectures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchEnvelope {
    pub schema_version: u32,
    #[serde(flatten)]
    pub arch: ArchPayload,
}

impl ArchEnvelope {
    pub fn new(arch: ArchPayload) -> Self {
        ArchEnvelope {
            schema_version: SCHEMA_VERSION,
            arch,
        }
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("envelope serializes")
    }

    pub fn decode(line: &str) -> Result<Self, Error> {
        let env: ArchEnvelope =
            serde_json::from_str(line).map_err(|e| Error::Serde(e.to_string()))?;
        env.arch.validate()?;
        Ok(env)
    }
}

/// One sampled architecture with its cost and per-task accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchRecord {
    pub arch_id: String,
    pub cost: CostStats,
    /// Task name -> accuracy in [0, 1]. BTreeMap keeps serialization stable.
    pub accuracies: BTreeMap<String, f64>,
}

impl ArchRecord {
    pub fn validate(&self, declared_tasks: &[String]) -> Result<(), Error> {
        for (task, acc) in &self.accuracies {
            if !declared_tasks.iter().any(|t| t == task) {
                return Err(Error::UndeclaredTask {
                    arch_id: self.arch_id.clone(),
                    task: task.clone(),
                });
            }
            if !(0.0..=1.0).contains(acc) {
                return Err(Error::AccuracyOutOfRange {
                    arch_id: self.arch_id.clone(),
                    task: task.clone(),
                    value: *acc,
                });
            }
        }
        Ok(())
    }

    pub fn accuracy(&self, key: &str) -> Option<f64> {
        self.accuracies.get(key).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::genotype::sample_genotype;
    use crate::space::bench::sample_bench_graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn envelope_roundtrip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let env = ArchEnvelope::new(ArchPayload::Darts(sample_genotype(&mut rng, 4)));
            assert_eq!(ArchEnvelope::decode(&env.encode()).unwrap(), env);
            let env = ArchEnvelope::new(ArchPayload::Bench(sample_bench_graph(&mut rng)));
            assert_eq!(ArchEnvelope::decode(&env.encode()).unwrap(), env);
        }
    }

    #[test]
    fn arch_id_is_stable_and_distinguishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = ArchPayload::Darts(sample_genotype(&mut rng, 4));
        let b = ArchPayload::Darts(sample_genotype(&mut rng, 4));
        assert_eq!(a.arch_id(), a.arch_id());
        assert_ne!(a.arch_id(), b.arch_id());
        assert!(a.arch_id().starts_with("d-"));
    }

    #[test]
    fn record_validation_enforces_range_and_tasks() {
        let tasks = vec!["supv_cls".to_string(), "rot".to_string()];
        let mut rec = ArchRecord {
            arch_id: "d-x".into(),
            cost: CostStats::zero(),
            accuracies: BTreeMap::from([("rot".to_string(), 0.8)]),
        };
        assert!(rec.validate(&tasks).is_ok());
        rec.accuracies.insert("rot".into(), 1.2);
        assert!(rec.validate(&tasks).is_err());
        rec.accuracies.insert("rot".into(), 0.8);
        rec.accuracies.insert("jigsaw".into(), 0.5);
        assert!(rec.validate(&tasks).is_err());
    }
}
