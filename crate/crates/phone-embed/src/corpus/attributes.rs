//! Speech-attribute inventories and per-phone attribute pattern matrices.
//!
//! A pattern is a fixed 3x31 binary matrix: one row per phone component,
//! padded with zero rows from behind. Compound vowels (diphthongs and
//! triphthongs) are split into 2-3 components first, e.g. `iang` becomes
//! `i`-`a`-`ng`, so the pattern coarsely tracks the articulatory motion.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::features::FeatureMatrix;
use crate::error::{Error, Result};
use crate::io;

/// Number of attribute items in an inventory.
pub const NUM_ATTRIBUTES: usize = 31;
/// Rows in a pattern matrix (max components of a compound vowel).
pub const PATTERN_ROWS: usize = 3;

/// Bundled Mandarin inventory: a faithful-spirit stand-in, meant to be
/// edited or replaced via [`AttributeInventory::from_json`].
const DEFAULT_INVENTORY_JSON: &str = include_str!("../../data/mandarin_attributes_31.json");

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InventoryFile {
    attributes: Vec<String>,
    phones: BTreeMap<String, Vec<String>>,
    splits: BTreeMap<String, Vec<String>>,
}

/// The 31 attribute names plus per-phone binary vectors and compound-vowel
/// split rules.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeInventory {
    attributes: Vec<String>,
    phone_map: BTreeMap<String, Vec<f64>>,
    split_map: BTreeMap<String, Vec<String>>,
}

impl AttributeInventory {
    /// The inventory bundled with the crate.
    pub fn default_mandarin() -> AttributeInventory {
        AttributeInventory::from_json(DEFAULT_INVENTORY_JSON)
            .expect("bundled inventory must be valid")
    }

    pub fn from_json(json: &str) -> Result<AttributeInventory> {
        let file: InventoryFile = serde_json::from_str(json)
            .map_err(|e| Error::InvalidInventory(e.to_string()))?;
        if file.attributes.len() != NUM_ATTRIBUTES {
            return Err(Error::InvalidInventory(format!(
                "expected exactly {NUM_ATTRIBUTES} attributes, got {}",
                file.attributes.len()
            )));
        }
        let mut index = BTreeMap::new();
        for (i, name) in file.attributes.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::InvalidInventory(format!(
                    "duplicate attribute `{name}`"
                )));
            }
        }
        let mut phone_map = BTreeMap::new();
        for (phone, set) in &file.phones {
            let mut vector = vec![0.0; NUM_ATTRIBUTES];
            for attr in set {
                let i = index.get(attr).ok_or_else(|| {
                    Error::InvalidInventory(format!(
                        "phone `{phone}` uses unknown attribute `{attr}`"
                    ))
                })?;
                vector[*i] = 1.0;
            }
            if vector.iter().all(|&v| v == 0.0) {
                return Err(Error::InvalidInventory(format!(
                    "phone `{phone}` has no attributes set"
                )));
            }
            phone_map.insert(phone.clone(), vector);
        }
        for (compound, parts) in &file.splits {
            if !(2..=PATTERN_ROWS).contains(&parts.len()) {
                return Err(Error::InvalidInventory(format!(
                    "split of `{compound}` must have 2 or 3 components, got {}",
                    parts.len()
                )));
            }
            for part in parts {
                if !phone_map.contains_key(part) {
                    return Err(Error::InvalidInventory(format!(
                        "split of `{compound}` references unknown phone `{part}`"
                    )));
                }
            }
            if phone_map.contains_key(compound) {
                return Err(Error::InvalidInventory(format!(
                    "`{compound}` appears in both phones and splits"
                )));
            }
        }
        Ok(AttributeInventory {
            attributes: file.attributes,
            phone_map,
            split_map: file.splits,
        })
    }

    pub fn from_file(path: &Path) -> Result<AttributeInventory> {
        let bytes = io::read_file(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|e| Error::InvalidInventory(format!("{}: {e}", path.display())))?;
        AttributeInventory::from_json(&text)
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    /// Every phone this inventory can encode a pattern for, sorted:
    /// base phones plus compounds with a split rule.
    pub fn encodable_phones(&self) -> Vec<String> {
        let mut all: Vec<String> = self
            .phone_map
            .keys()
            .chain(self.split_map.keys())
            .cloned()
            .collect();
        all.sort();
        all
    }

    pub fn attribute_vector(&self, phone: &str) -> Option<&[f64]> {
        self.phone_map.get(phone).map(Vec::as_slice)
    }

    pub fn split_of(&self, phone: &str) -> Option<&[String]> {
        self.split_map.get(phone).map(Vec::as_slice)
    }

    /// Encodes a phone as its 3x31 attribute pattern.
    ///
    /// Compound vowels expand through the split rule, one component per row
    /// in order; simple phones occupy row 0; unused rows stay zero.
    pub fn encode_pattern(&self, phone: &str) -> Result<AttributePattern> {
        let components: Vec<&str> = if let Some(parts) = self.split_map.get(phone) {
            parts.iter().map(String::as_str).collect()
        } else if self.phone_map.contains_key(phone) {
            vec![phone]
        } else {
            return Err(Error::UnknownPhone(phone.to_string()));
        };
        let mut rows = [[0.0; NUM_ATTRIBUTES]; PATTERN_ROWS];
        for (r, part) in components.iter().enumerate() {
            let vector = self
                .phone_map
                .get(*part)
                .ok_or_else(|| Error::UnknownPhone((*part).to_string()))?;
            rows[r].copy_from_slice(vector);
        }
        Ok(AttributePattern { rows })
    }
}

/// A 3x31 binary pattern matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributePattern {
    rows: [[f64; NUM_ATTRIBUTES]; PATTERN_ROWS],
}

impl AttributePattern {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.rows[r]
    }

    pub fn nonzero_rows(&self) -> usize {
        self.rows
            .iter()
            .filter(|row| row.iter().any(|&v| v != 0.0))
            .count()
    }

    /// The pattern viewed as a 3-frame, 31-dim feature matrix, the input
    /// shape of the attribute-view embedding network.
    pub fn to_matrix(&self) -> FeatureMatrix {
        let values = self.rows.iter().flatten().copied().collect();
        FeatureMatrix::new(PATTERN_ROWS, NUM_ATTRIBUTES, values)
            .expect("pattern matrix is always valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bundled_inventory_is_valid_with_31_items() {
        let inv = AttributeInventory::default_mandarin();
        assert_eq!(inv.attributes().len(), NUM_ATTRIBUTES);
        assert!(inv.attribute_vector("a").is_some());
        assert!(inv.split_of("iang").is_some());
    }

    #[test]
    fn triphthong_expands_one_component_per_row() {
        let inv = AttributeInventory::default_mandarin();
        // iang splits into i-a-ng
        let pattern = inv.encode_pattern("iang").unwrap();
        assert_eq!(pattern.row(0), inv.attribute_vector("i").unwrap());
        assert_eq!(pattern.row(1), inv.attribute_vector("a").unwrap());
        assert_eq!(pattern.row(2), inv.attribute_vector("ng").unwrap());
        assert_eq!(pattern.nonzero_rows(), 3);
    }

    #[test]
    fn consonant_occupies_row_zero_only() {
        let inv = AttributeInventory::default_mandarin();
        let pattern = inv.encode_pattern("b").unwrap();
        assert_eq!(pattern.row(0), inv.attribute_vector("b").unwrap());
        assert!(pattern.row(1).iter().all(|&v| v == 0.0));
        assert!(pattern.row(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn diphthong_pads_the_third_row_with_zero() {
        let inv = AttributeInventory::default_mandarin();
        let pattern = inv.encode_pattern("ai").unwrap();
        assert_eq!(pattern.row(0), inv.attribute_vector("a").unwrap());
        assert_eq!(pattern.row(1), inv.attribute_vector("i").unwrap());
        assert!(pattern.row(2).iter().all(|&v| v == 0.0));
        assert_eq!(pattern.nonzero_rows(), 2);
    }

    #[test]
    fn unknown_phone_is_named_in_the_error() {
        let inv = AttributeInventory::default_mandarin();
        match inv.encode_pattern("qqq").unwrap_err() {
            Error::UnknownPhone(p) => assert_eq!(p, "qqq"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_attribute_count() {
        let json = r#"{"attributes": ["one", "two"], "phones": {"a": ["one"]}, "splits": {}}"#;
        assert!(matches!(
            AttributeInventory::from_json(json).unwrap_err(),
            Error::InvalidInventory(_)
        ));
    }

    proptest! {
        #[test]
        fn every_pattern_has_1_to_3_rows_matching_inventory_vectors(idx in 0usize..60) {
            let inv = AttributeInventory::default_mandarin();
            let phones = inv.encodable_phones();
            let phone = &phones[idx % phones.len()];
            let pattern = inv.encode_pattern(phone).unwrap();
            let nonzero = pattern.nonzero_rows();
            prop_assert!((1..=PATTERN_ROWS).contains(&nonzero));
            for r in 0..nonzero {
                let row = pattern.row(r);
                let matches_some_phone = inv
                    .encodable_phones()
                    .iter()
                    .filter_map(|p| inv.attribute_vector(p))
                    .any(|vec| vec == row);
                prop_assert!(matches_some_phone, "row {r} of `{phone}` matches no inventory vector");
            }
            for r in nonzero..PATTERN_ROWS {
                prop_assert!(pattern.row(r).iter().all(|&v| v == 0.0));
            }
        }
    }
}
