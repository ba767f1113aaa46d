//! Bundled test networks.

use crate::chain::{build_chain, ChainConfig};
use crate::dcopf::LoadVector;
use crate::error::Result;
use crate::matpower::{build_network, parse_matpower};
use crate::model::{Network, OpfParams};

/// MATPOWER `case9`.
pub const CASE9_M: &str = include_str!("../data/case9.m");
/// Two copies of case9 joined by one tie.
pub const CHAIN18_JSON: &str = include_str!("../data/chain18.json");
/// Three copies of case9 joined in a line by two ties.
pub const CHAIN27_JSON: &str = include_str!("../data/chain27.json");

/// case9 with its default demand.
pub fn case9() -> Result<(Network, OpfParams, LoadVector)> {
    let case = parse_matpower(CASE9_M)?;
    let (net, params) = build_network(&case)?;
    let load = LoadVector::from_demand(case.load_profile(&net))?;
    Ok((net, params, load))
}

/// Copies of case9 tied together according to `config_json`.
pub fn case9_chain(config_json: &str) -> Result<(Network, OpfParams)> {
    let case = parse_matpower(CASE9_M)?;
    let (base, params) = build_network(&case)?;
    let cfg = ChainConfig::from_json(config_json)?;
    let ties = cfg.resolve(&base, &params)?;
    build_chain(&base, &params, cfg.copies, &ties)
}
