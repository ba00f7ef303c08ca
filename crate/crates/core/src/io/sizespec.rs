//! Size table: CSV with one row per category and the header
//! `category,shortest_min,shortest_max,middle_min,middle_max,longest_min,longest_max,max_depth_width_ratio,is_flat,is_elongated,fixed_size`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::filters::SizeSpec;

pub fn parse_size_specs<R: std::io::Read>(reader: R) -> Result<BTreeMap<String, SizeSpec>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = BTreeMap::new();
    for (i, row) in rdr.deserialize::<SizeSpec>().enumerate() {
        let record = format!("size row {}", i + 1);
        let spec = row.map_err(|e| Error::Schema {
            record: record.clone(),
            reason: e.to_string(),
        })?;
        spec.validate().map_err(|reason| Error::Schema {
            record: record.clone(),
            reason,
        })?;
        if out.contains_key(&spec.category) {
            return Err(Error::Schema {
                record,
                reason: format!("duplicate category {}", spec.category),
            });
        }
        out.insert(spec.category.clone(), spec);
    }
    Ok(out)
}

pub fn read_size_specs(path: &Path) -> Result<BTreeMap<String, SizeSpec>> {
    parse_size_specs(super::read_bytes(path)?.as_slice())
}
