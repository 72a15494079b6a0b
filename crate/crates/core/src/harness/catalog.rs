//! The eight reference architectures: tanh conv layers without bias, then
//! one linear FC layer with bias to 10 classes, on 3×32×32 inputs.

use crate::data::CIFAR_SHAPE;
use crate::error::{Error, Result};
use crate::net::NetworkSpec;

/// `(kernel, channels, stride, padding)` of one conv layer.
pub type ConvParams = (usize, usize, usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub conv: &'static [ConvParams],
    pub fc_inputs: usize,
    /// Reference per-conv-layer rank deficiencies.
    pub reference_rd: &'static [i64],
    /// Reference security score, as an integer.
    pub reference_c: i64,
}

impl CatalogEntry {
    pub fn spec(&self) -> NetworkSpec {
        let mut b = NetworkSpec::builder(CIFAR_SHAPE);
        for &(k, c, s, p) in self.conv {
            b = b.conv(k, c, s, p);
        }
        b.fully_connected(10).build().expect("catalog architectures are valid")
    }
}

pub const CATALOG: [CatalogEntry; 8] = [
    CatalogEntry {
        name: "cnn2_v1",
        conv: &[(3, 6, 1, 0)],
        fc_inputs: 5400,
        reference_rd: &[0],
        reference_c: 0,
    },
    CatalogEntry {
        name: "cnn2_v2",
        conv: &[(4, 6, 2, 0)],
        fc_inputs: 1350,
        reference_rd: &[-1470],
        reference_c: -1470,
    },
    CatalogEntry {
        name: "cnn3_v1",
        conv: &[(3, 6, 1, 0), (4, 3, 2, 0)],
        fc_inputs: 588,
        reference_rd: &[0, -4533],
        reference_c: -2266,
    },
    CatalogEntry {
        name: "cnn3_v2",
        conv: &[(4, 6, 2, 0), (3, 3, 2, 0)],
        fc_inputs: 147,
        reference_rd: &[-1470, -1050],
        reference_c: -1995,
    },
    CatalogEntry {
        name: "cnn3_v3",
        conv: &[(3, 6, 1, 0), (3, 9, 1, 0)],
        fc_inputs: 7056,
        reference_rd: &[0, 0],
        reference_c: 0,
    },
    CatalogEntry {
        name: "cnn3_v4",
        conv: &[(3, 1, 1, 0), (3, 6, 1, 0)],
        fc_inputs: 4704,
        reference_rd: &[-2146, 0],
        reference_c: -2146,
    },
    CatalogEntry {
        name: "cnn4_v1",
        conv: &[(3, 6, 1, 0), (4, 5, 2, 0), (4, 3, 1, 0)],
        fc_inputs: 363,
        reference_rd: &[0, -3965, -386],
        reference_c: -2772,
    },
    CatalogEntry {
        name: "cnn4_v2",
        conv: &[(5, 16, 1, 0), (5, 6, 2, 0), (5, 32, 1, 2)],
        fc_inputs: 4608,
        reference_rd: &[0, -9316, 0],
        reference_c: -6211,
    },
];

pub fn catalog_names() -> Vec<&'static str> {
    CATALOG.iter().map(|e| e.name).collect()
}

pub fn catalog_entry(name: &str) -> Result<&'static CatalogEntry> {
    let key = name.trim().to_ascii_lowercase().replace(['-', ' '], "_");
    CATALOG.iter().find(|e| e.name == key).ok_or_else(|| Error::Catalog {
        name: name.to_string(),
        valid: catalog_names().join(", "),
    })
}

/// The named architecture.
pub fn architecture(name: &str) -> Result<NetworkSpec> {
    catalog_entry(name).map(CatalogEntry::spec)
}

/// Every architecture, in catalog order.
pub fn catalog() -> Vec<(&'static str, NetworkSpec)> {
    CATALOG.iter().map(|e| (e.name, e.spec())).collect()
}
