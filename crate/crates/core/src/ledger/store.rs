//! Chain file: a sequence of frames, each a big-endian `u32` length followed
//! by one canonically serialized block. Only ever appended to.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::codec::DecodeError;

use super::block::Block;
use super::ChainVerdict;

#[derive(Debug)]
pub struct ChainFile {
    path: PathBuf,
    file: File,
}

impl ChainFile {
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, block: &Block) -> io::Result<()> {
        self.file.write_all(&frame(block))?;
        self.file.flush()
    }
}

pub fn frame(block: &Block) -> Vec<u8> {
    let body = block.to_bytes();
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn encode_chain(blocks: &[Block]) -> Vec<u8> {
    blocks.iter().flat_map(frame).collect()
}

/// Splits a chain file into blocks. Fails at the first frame that cannot be
/// decoded; the error offset is relative to the start of the file.
pub fn decode_chain(bytes: &[u8]) -> Result<Vec<Block>, (u64, DecodeError)> {
    let mut blocks = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let index = blocks.len() as u64;
        if bytes.len() - pos < 4 {
            return Err((
                index,
                DecodeError {
                    offset: pos,
                    reason: "truncated frame length".into(),
                },
            ));
        }
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        let start = pos + 4;
        if bytes.len() - start < len {
            return Err((
                index,
                DecodeError {
                    offset: start,
                    reason: format!(
                        "frame declares {len} bytes, only {} remain",
                        bytes.len() - start
                    ),
                },
            ));
        }
        let block = Block::decode(&bytes[start..start + len], start).map_err(|e| (index, e))?;
        blocks.push(block);
        pos = start + len;
    }
    Ok(blocks)
}

pub fn read_chain_file(
    path: impl AsRef<Path>,
) -> io::Result<Result<Vec<Block>, (u64, DecodeError)>> {
    Ok(decode_chain(&std::fs::read(path)?))
}

/// Verifies a serialized chain. Undecodable frames count as a bad block at
/// the frame's index.
pub fn verify_chain_bytes(bytes: &[u8]) -> ChainVerdict {
    match decode_chain(bytes) {
        Ok(blocks) => super::verify_chain(&blocks),
        Err((height, err)) => {
            // A decodable prefix may already contain an earlier bad block.
            let prefix = decode_prefix(bytes, height);
            match super::verify_chain(&prefix) {
                ChainVerdict::Valid => ChainVerdict::Invalid {
                    first_bad_height: height,
                    reason: err.to_string(),
                },
                bad => bad,
            }
        }
    }
}

fn decode_prefix(bytes: &[u8], count: u64) -> Vec<Block> {
    let mut out = Vec::new();
    let mut pos = 0usize;
    while (out.len() as u64) < count {
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        let start = pos + 4;
        out.push(Block::decode(&bytes[start..start + len], start).expect("prefix decoded before"));
        pos = start + len;
    }
    out
}
