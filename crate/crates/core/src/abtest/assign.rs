use super::Arm;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh64::xxh64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub user_id: String,
    pub arm: Arm,
    pub salt: String,
}

/// Map `(user_id, salt)` to `[0, 1)`: XXH64 (seed 0) of the UTF-8 bytes of
/// `user_id`, a NUL byte and `salt`, keeping the top 53 bits.
pub fn hash_unit(user_id: &str, salt: &str) -> f64 {
    let mut buf = Vec::with_capacity(user_id.len() + salt.len() + 1);
    buf.extend_from_slice(user_id.as_bytes());
    buf.push(0);
    buf.extend_from_slice(salt.as_bytes());
    (xxh64(&buf, 0) >> 11) as f64 / (1u64 << 53) as f64
}

/// Users hashing below `ratio_cf` get the latent-factor arm.
///
/// # Panics
/// If `ratio_cf` is not in `(0, 1)`.
pub fn assign_arm(user_id: &str, salt: &str, ratio_cf: f64) -> Assignment {
    assert!(ratio_cf > 0.0 && ratio_cf < 1.0, "ratio_cf must lie in (0, 1)");
    let arm = if hash_unit(user_id, salt) < ratio_cf { Arm::Cf } else { Arm::Attentive };
    Assignment { user_id: user_id.to_string(), arm, salt: salt.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xxh64_reference_vectors() {
        assert_eq!(xxh64(b"", 0), 0xEF46_DB37_51D8_E999);
        assert_eq!(xxh64(b"a", 0), 0xD24E_C4F1_A98C_6E5B);
    }

    #[test]
    fn deterministic() {
        assert_eq!(assign_arm("u1", "exp", 0.5), assign_arm("u1", "exp", 0.5));
        let h = hash_unit("u1", "exp");
        assert!((0.0..1.0).contains(&h));
    }

    #[test]
    fn separator_prevents_concatenation_collisions() {
        assert_ne!(hash_unit("ab", "c"), hash_unit("a", "bc"));
    }

    #[test]
    fn marginals_follow_ratio() {
        let n = 10_000;
        let cf = (0..n).filter(|i| assign_arm(&format!("user{i}"), "s", 0.3).arm == Arm::Cf).count();
        let sd = (n as f64 * 0.3 * 0.7).sqrt();
        assert!((cf as f64 - 3000.0).abs() < 3.0 * sd, "{cf}");
    }

    #[test]
    fn new_salt_reshuffles() {
        let n = 10_000;
        let same = (0..n)
            .filter(|i| {
                let u = format!("user{i}");
                assign_arm(&u, "a", 0.7).arm == assign_arm(&u, "b", 0.7).arm
            })
            .count();
        // independent arms agree with probability 0.7^2 + 0.3^2
        let rate = same as f64 / n as f64;
        assert!((rate - 0.58).abs() < 0.02, "{rate}");
    }
}
