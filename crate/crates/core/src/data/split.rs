//! Train/test splits for the four studies.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};
use crate::grid::Sample;

/// Train and test protocols of the protocol-generalization studies.
pub fn study_protocols(study: u8) -> Result<Option<(&'static [u8], &'static [u8])>> {
    match study {
        1 => Ok(None),
        2 => Ok(Some((&[1, 2, 4], &[3, 5, 6, 7]))),
        3 => Ok(Some((&[1, 6, 7], &[2, 3, 4, 5]))),
        4 => Ok(Some((&[2, 3, 4, 5, 6, 7], &[1]))),
        _ => Err(Error::Config(format!("unknown study id {study}; valid ids are 1-4"))),
    }
}

/// Sorted train and test indices. Study 1 is a seeded random 83/17 split,
/// the others split by protocol.
pub fn study_indices(protocol_ids: &[u8], study: u8, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    match study_protocols(study)? {
        None => {
            let mut idx: Vec<usize> = (0..protocol_ids.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let n_train = (protocol_ids.len() as f64 * 0.83).floor() as usize;
            let mut train = idx[..n_train].to_vec();
            let mut test = idx[n_train..].to_vec();
            train.sort_unstable();
            test.sort_unstable();
            Ok((train, test))
        }
        Some((train_p, test_p)) => {
            let pick = |set: &[u8]| {
                protocol_ids
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| set.contains(p))
                    .map(|(k, _)| k)
                    .collect::<Vec<_>>()
            };
            Ok((pick(train_p), pick(test_p)))
        }
    }
}

/// Owned train and test samples for a study.
pub fn split_study(ds: &Dataset, study: u8, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let ids: Vec<u8> = ds.samples.iter().map(|s| s.protocol_id).collect();
    let (train, test) = study_indices(&ids, study, seed)?;
    let take = |idx: &[usize]| idx.iter().map(|&k| ds.samples[k].clone()).collect::<Vec<_>>();
    Ok((take(&train), take(&test)))
}
