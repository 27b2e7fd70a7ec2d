use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Binary hash tree over hex leaf digests. Each parent hashes the raw bytes
/// of its two children; an unpaired node moves up unchanged. The root of no
/// leaves is the digest of the empty string.
pub fn merkle_root(leaves: &[String]) -> String {
    if leaves.is_empty() {
        return sha256_hex(b"");
    }
    let mut level: Vec<Vec<u8>> = leaves
        .iter()
        .map(|h| hex::decode(h).unwrap_or_else(|_| Sha256::digest(h.as_bytes()).to_vec()))
        .collect();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| match pair {
                [a, b] => {
                    let mut h = Sha256::new();
                    h.update(a);
                    h.update(b);
                    h.finalize().to_vec()
                }
                [a] => a.clone(),
                _ => unreachable!(),
            })
            .collect();
    }
    hex::encode(&level[0])
}
