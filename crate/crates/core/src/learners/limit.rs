//! Serde forms for optional size limits. TOML has no null, so an absent
//! limit is written as the string "none" (depth) or "all" (features).

use alloc::string::String;
use alloc::vec::Vec;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Repr {
    N(usize),
    S(String),
}

fn decode<E: de::Error>(r: Repr) -> Result<Option<usize>, E> {
    match r {
        Repr::N(n) => Ok(Some(n)),
        Repr::S(s) if s == "none" || s == "all" => Ok(None),
        Repr::S(s) => Err(E::custom(alloc::format!("expected an integer, \"none\" or \"all\", got \"{s}\""))),
    }
}

fn encode(v: Option<usize>, word: &str) -> Repr {
    v.map_or_else(|| Repr::S(word.into()), Repr::N)
}

macro_rules! limit_mod {
    ($name:ident, $vec:ident, $word:literal) => {
        pub mod $name {
            use super::*;

            pub fn serialize<S: Serializer>(v: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
                encode(*v, $word).serialize(s)
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
                decode(Repr::deserialize(d)?)
            }
        }

        pub mod $vec {
            use super::*;

            pub fn serialize<S: Serializer>(v: &[Option<usize>], s: S) -> Result<S::Ok, S::Error> {
                v.iter().map(|x| encode(*x, $word)).collect::<Vec<_>>().serialize(s)
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Option<usize>>, D::Error> {
                Vec::<Repr>::deserialize(d)?.into_iter().map(decode).collect()
            }
        }
    };
}

limit_mod!(depth, depth_vec, "none");
limit_mod!(features, features_vec, "all");
