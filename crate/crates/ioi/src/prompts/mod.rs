// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dataset generation for the three prompt variants.
//!
//! Prompts are rendered from fixed templates with name/place/object slots,
//! tokenized, and aligned so that each semantic role (IO1, S2, END, ...)
//! maps to a token position. Every pooled word must be a single token with
//! a leading space, which keeps token length and role layout constant
//! within a (template, order) group.

pub mod templates;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;

/// Prompt variant: how many times the IO name is repeated in the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "BaseIOI")]
    Base,
    #[serde(rename = "DoubleIO")]
    Double,
    #[serde(rename = "TripleIO")]
    Triple,
}

impl Variant {
    pub fn io_occurrences(self) -> usize {
        match self {
            Variant::Base => 1,
            Variant::Double => 2,
            Variant::Triple => 3,
        }
    }

    pub fn s_occurrences(self) -> usize {
        2
    }

    pub fn baba_templates(self) -> &'static [&'static str] {
        match self {
            Variant::Base => templates::BASE_IOI_BABA,
            Variant::Double => templates::DOUBLE_IO_BABA,
            Variant::Triple => templates::TRIPLE_IO_BABA,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Base => "BaseIOI",
            Variant::Double => "DoubleIO",
            Variant::Triple => "TripleIO",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseioi" | "base" => Ok(Variant::Base),
            "doubleio" | "double" => Ok(Variant::Double),
            "tripleio" | "triple" => Ok(Variant::Triple),
            _ => Err(Error::Parse {
                what: "variant".into(),
                detail: format!("unknown variant `{s}`"),
            }),
        }
    }
}

/// Which duplicated name appears first in the prompt. ABBA templates put
/// the IO name first; BABA templates put the subject first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Order {
    #[serde(rename = "IO-first")]
    IoFirst,
    #[serde(rename = "S-first")]
    SFirst,
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Order::IoFirst => "IO-first",
            Order::SFirst => "S-first",
        })
    }
}

/// Semantic role of a token position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "IO1")]
    Io1,
    #[serde(rename = "IO2")]
    Io2,
    #[serde(rename = "IO3")]
    Io3,
    #[serde(rename = "S1")]
    S1,
    #[serde(rename = "S2")]
    S2,
    #[serde(rename = "IO1+1")]
    Io1Next,
    #[serde(rename = "IO2+1")]
    Io2Next,
    #[serde(rename = "S1+1")]
    S1Next,
    #[serde(rename = "END")]
    End,
}

impl Role {
    /// Roles naming a duplicate occurrence of a name, i.e. valid sources
    /// for duplicate-detection paths.
    pub fn is_duplicate_occurrence(self) -> bool {
        matches!(self, Role::S2 | Role::Io2 | Role::Io3)
    }

    /// The previous occurrence in the same name stream, if any.
    pub fn previous_occurrence(self) -> Option<Role> {
        match self {
            Role::S2 => Some(Role::S1),
            Role::Io2 => Some(Role::Io1),
            Role::Io3 => Some(Role::Io2),
            _ => None,
        }
    }

    pub const ALL: [Role; 9] = [
        Role::Io1,
        Role::Io2,
        Role::Io3,
        Role::S1,
        Role::S2,
        Role::Io1Next,
        Role::Io2Next,
        Role::S1Next,
        Role::End,
    ];
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Io1 => "IO1",
            Role::Io2 => "IO2",
            Role::Io3 => "IO3",
            Role::S1 => "S1",
            Role::S2 => "S2",
            Role::Io1Next => "IO1+1",
            Role::Io2Next => "IO2+1",
            Role::S1Next => "S1+1",
            Role::End => "END",
        })
    }
}

impl FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "IO1" => Ok(Role::Io1),
            "IO2" => Ok(Role::Io2),
            "IO3" => Ok(Role::Io3),
            "S1" => Ok(Role::S1),
            "S2" => Ok(Role::S2),
            "IO1+1" => Ok(Role::Io1Next),
            "IO2+1" => Ok(Role::Io2Next),
            "S1+1" => Ok(Role::S1Next),
            "END" => Ok(Role::End),
            _ => Err(Error::Parse {
                what: "role".into(),
                detail: format!("unknown role `{s}`"),
            }),
        }
    }
}

/// Map from semantic role to token index.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RoleMap(pub BTreeMap<Role, usize>);

impl RoleMap {
    pub fn get(&self, role: Role) -> Option<usize> {
        self.0.get(&role).copied()
    }

    pub fn require(&self, role: Role) -> Result<usize> {
        self.get(role)
            .ok_or_else(|| Error::Alignment(format!("role {role} not present in this variant")))
    }

    pub fn end(&self) -> usize {
        self.get(Role::End).unwrap_or(0)
    }

    pub fn contains(&self, role: Role) -> bool {
        self.0.contains_key(&role)
    }
}

/// One generated prompt with tokenization and role alignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptExample {
    pub template_id: usize,
    pub variant: Variant,
    pub order: Order,
    pub io_name: String,
    pub s_name: String,
    pub place: String,
    pub object: String,
    pub text: String,
    pub tokens: Vec<u32>,
    pub roles: RoleMap,
}

impl PromptExample {
    pub fn io_token(&self, tok: &Tokenizer) -> u32 {
        tok.encode(&format!(" {}", self.io_name))[0]
    }

    pub fn s_token(&self, tok: &Tokenizer) -> u32 {
        tok.encode(&format!(" {}", self.s_name))[0]
    }

    /// Grouping key for mean caches: identical token length and role layout.
    pub fn group_key(&self) -> (usize, Order) {
        (self.template_id, self.order)
    }
}

/// Raw word pools, before tokenizer filtering.
#[derive(Debug, Clone)]
pub struct WordPools {
    pub names: Vec<String>,
    pub places: Vec<String>,
    pub objects: Vec<String>,
}

impl WordPools {
    /// The pools shipped with the crate.
    pub fn builtin() -> Self {
        let parse = |s: &str| {
            s.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect()
        };
        WordPools {
            names: parse(include_str!("../../data/names.txt")),
            places: parse(include_str!("../../data/places.txt")),
            objects: parse(include_str!("../../data/objects.txt")),
        }
    }

    pub fn from_files(names: &str, places: &str, objects: &str) -> Result<Self> {
        let read = |p: &str| -> Result<Vec<String>> {
            Ok(std::fs::read_to_string(p)
                .map_err(|e| Error::io(p, e))?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect())
        };
        Ok(WordPools {
            names: read(names)?,
            places: read(places)?,
            objects: read(objects)?,
        })
    }

    /// Keep only entries that encode to exactly one token with a leading
    /// space under `tok`.
    pub fn filter(&self, tok: &Tokenizer) -> Result<FilteredPools> {
        let keep = |words: &[String]| -> Vec<PoolWord> {
            words
                .iter()
                .filter_map(|w| {
                    tok.single_token(&format!(" {w}")).map(|id| PoolWord {
                        word: w.clone(),
                        token: id,
                    })
                })
                .collect()
        };
        let pools = FilteredPools {
            names: keep(&self.names),
            places: keep(&self.places),
            objects: keep(&self.objects),
        };
        if pools.names.len() < 3 {
            return Err(Error::Pool(format!(
                "only {} single-token names after filtering; need at least 3",
                pools.names.len()
            )));
        }
        if pools.places.is_empty() || pools.objects.is_empty() {
            return Err(Error::Pool("empty place or object pool after filtering".into()));
        }
        Ok(pools)
    }
}

#[derive(Debug, Clone)]
pub struct PoolWord {
    pub word: String,
    pub token: u32,
}

/// Tokenizer-validated pools: every entry is one token with leading space.
#[derive(Debug, Clone)]
pub struct FilteredPools {
    pub names: Vec<PoolWord>,
    pub places: Vec<PoolWord>,
    pub objects: Vec<PoolWord>,
}

/// Render a template in the given order with the answer name stripped.
pub fn render_prompt(
    template: &str,
    order: Order,
    io_name: &str,
    s_name: &str,
    place: &str,
    object: &str,
) -> String {
    let text = match order {
        Order::SFirst => template.to_string(),
        // swap the leading "[B] and [A]" pair to produce the ABBA form
        Order::IoFirst => template.replacen("[B] and [A]", "[A] and [B]", 1),
    };
    // the final [A] slot is the answer; the prompt stops just before it
    let text = match text.rfind(" [A]") {
        Some(idx) => text[..idx].to_string(),
        None => text,
    };
    text.replace("[A]", io_name)
        .replace("[B]", s_name)
        .replace("[PLACE]", place)
        .replace("[OBJECT]", object)
}

/// Locate each role's token index by scanning for name-token occurrences.
pub fn align_roles(
    tokens: &[u32],
    io_token: u32,
    s_token: u32,
    variant: Variant,
) -> Result<RoleMap> {
    let occurrences = |t: u32| -> Vec<usize> {
        tokens
            .iter()
            .enumerate()
            .filter(|(_, &x)| x == t)
            .map(|(i, _)| i)
            .collect()
    };
    let io_occ = occurrences(io_token);
    let s_occ = occurrences(s_token);
    if io_occ.len() != variant.io_occurrences() {
        return Err(Error::Alignment(format!(
            "expected {} occurrences of the IO token, found {}",
            variant.io_occurrences(),
            io_occ.len()
        )));
    }
    if s_occ.len() != variant.s_occurrences() {
        return Err(Error::Alignment(format!(
            "expected {} occurrences of the S token, found {}",
            variant.s_occurrences(),
            s_occ.len()
        )));
    }

    let mut map = BTreeMap::new();
    let io_roles = [Role::Io1, Role::Io2, Role::Io3];
    for (k, &idx) in io_occ.iter().enumerate() {
        map.insert(io_roles[k], idx);
    }
    map.insert(Role::S1, s_occ[0]);
    map.insert(Role::S2, s_occ[1]);
    map.insert(Role::Io1Next, io_occ[0] + 1);
    if io_occ.len() >= 2 {
        map.insert(Role::Io2Next, io_occ[1] + 1);
    }
    map.insert(Role::S1Next, s_occ[0] + 1);
    map.insert(Role::End, tokens.len() - 1);

    let map = RoleMap(map);
    if map.end() + 1 != tokens.len() {
        return Err(Error::Alignment("END must be the final token".into()));
    }
    Ok(map)
}

/// Generate a seeded dataset with the exact requested order mix
/// (rounded toward IO-first).
pub fn generate_dataset(
    tok: &Tokenizer,
    pools: &FilteredPools,
    variant: Variant,
    n: usize,
    seed: u64,
    order_mix: f64,
) -> Result<Vec<PromptExample>> {
    if n == 0 {
        return Err(Error::Pool("dataset size must be at least 1".into()));
    }
    if pools.names.len() < 2 {
        return Err(Error::Pool("need at least 2 names".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_io_first = ((n as f64) * order_mix).ceil().min(n as f64) as usize;
    let mut orders: Vec<Order> = std::iter::repeat_n(Order::IoFirst, n_io_first)
        .chain(std::iter::repeat_n(Order::SFirst, n - n_io_first))
        .collect();
    orders.shuffle(&mut rng);

    let templates = variant.baba_templates();
    let mut out = Vec::with_capacity(n);
    for (i, order) in orders.into_iter().enumerate() {
        let template_id = i % templates.len();
        let mut names = pools.names.clone();
        names.shuffle(&mut rng);
        let io = &names[0];
        let s = &names[1];
        let place = pools.places.choose(&mut rng).unwrap();
        let object = pools.objects.choose(&mut rng).unwrap();

        let text = render_prompt(
            templates[template_id],
            order,
            &io.word,
            &s.word,
            &place.word,
            &object.word,
        );
        let tokens = tok.encode(&text);
        let roles = align_roles(&tokens, io.token, s.token, variant)?;
        out.push(PromptExample {
            template_id,
            variant,
            order,
            io_name: io.word.clone(),
            s_name: s.word.clone(),
            place: place.word.clone(),
            object: object.word.clone(),
            text,
            tokens,
            roles,
        });
    }
    Ok(out)
}

/// Replace every name occurrence with a fresh name, all mutually distinct
/// and distinct from the originals, so the result carries no duplication
/// signal. Token length and role positions are preserved.
pub fn corrupt_names(
    example: &PromptExample,
    seed: u64,
    pools: &FilteredPools,
    tok: &Tokenizer,
) -> Result<PromptExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let name_roles: Vec<Role> = [Role::Io1, Role::Io2, Role::Io3, Role::S1, Role::S2]
        .into_iter()
        .filter(|r| example.roles.contains(*r))
        .collect();

    let mut fresh: Vec<&PoolWord> = pools
        .names
        .iter()
        .filter(|w| w.word != example.io_name && w.word != example.s_name)
        .collect();
    if fresh.len() < name_roles.len() {
        return Err(Error::Pool(format!(
            "pool exhausted: need {} fresh names, have {}",
            name_roles.len(),
            fresh.len()
        )));
    }
    fresh.shuffle(&mut rng);

    let mut tokens = example.tokens.clone();
    for (role, word) in name_roles.iter().zip(&fresh) {
        let idx = example.roles.require(*role)?;
        tokens[idx] = word.token;
    }
    let text = tok.decode(&tokens);
    Ok(PromptExample {
        text,
        tokens,
        ..example.clone()
    })
}

/// Serialize a dataset as JSONL, one example per line.
pub fn to_jsonl(examples: &[PromptExample]) -> String {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&serde_json::to_string(ex).unwrap());
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Vec<PromptExample>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                what: "dataset jsonl".into(),
                detail: e.to_string(),
            })
        })
        .collect()
}
