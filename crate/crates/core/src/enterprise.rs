//! Off-chain profile repository kept by each enterprise, and the open-data
//! document used to exchange profiles.
//!
//! Documents are canonical JSON: keys sorted, dates as ISO calendar dates,
//! a `format` tag and the `user_id` always present.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::Path;

use chrono::NaiveDate;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::consent::{ConsentDenied, ConsentState, ConsentTable};
use crate::crypto::Address;
use crate::node::Node;
use crate::sharing::{open_shared, share_data, ConsentScope, ShareError};

pub const FORMAT_TAG: &str = "consentchain-profile/1";

pub const NAME: &str = "name";
pub const NATIONALITY: &str = "nationality";
pub const CONTACT_NUMBER: &str = "contact_number";
pub const PURPOSE_OF_VISIT: &str = "purpose_of_visit";
pub const STAY_FROM: &str = "stay_from";
pub const STAY_TO: &str = "stay_to";

/// Shareable profile fields, in document order.
pub const PROFILE_FIELDS: [&str; 6] = [
    NAME,
    NATIONALITY,
    CONTACT_NUMBER,
    PURPOSE_OF_VISIT,
    STAY_FROM,
    STAY_TO,
];

const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {field}: {reason}")]
pub struct ValidationError {
    pub field: String,
    pub reason: String,
}

impl ValidationError {
    fn new(field: &str, reason: impl Into<String>) -> Self {
        ValidationError {
            field: field.to_owned(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum EnterpriseError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("unknown profile field {0:?}")]
    UnknownField(String),
    #[error("no profile for user {0:?}")]
    UnknownUser(String),
    #[error(transparent)]
    ConsentDenied(#[from] ConsentDenied),
    #[error("recipients share no consented field")]
    NoCommonFields,
    #[error(transparent)]
    Share(#[from] ShareError),
    #[error("repository I/O: {0}")]
    Io(#[from] io::Error),
    #[error("repository file is corrupt: {0}")]
    Corrupt(#[from] serde_json::Error),
}

/// A profile; fields are optional because imported profiles carry only the
/// consented subset. Locally ingested profiles have every field.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub name: Option<String>,
    pub nationality: Option<String>,
    pub contact_number: Option<String>,
    pub purpose_of_visit: Option<String>,
    pub stay_from: Option<NaiveDate>,
    pub stay_to: Option<NaiveDate>,
    pub share_flags: BTreeMap<String, bool>,
}

impl UserProfile {
    /// Field value rendered as document text.
    pub fn field(&self, name: &str) -> Option<String> {
        match name {
            NAME => self.name.clone(),
            NATIONALITY => self.nationality.clone(),
            CONTACT_NUMBER => self.contact_number.clone(),
            PURPOSE_OF_VISIT => self.purpose_of_visit.clone(),
            STAY_FROM => self.stay_from.map(|d| d.format(DATE_FORMAT).to_string()),
            STAY_TO => self.stay_to.map(|d| d.format(DATE_FORMAT).to_string()),
            _ => None,
        }
    }

    /// Names of fields that hold a value.
    pub fn present_fields(&self) -> BTreeSet<&'static str> {
        PROFILE_FIELDS
            .into_iter()
            .filter(|f| self.field(f).is_some())
            .collect()
    }

    /// Copy holding only `fields` (plus the user id).
    pub fn project(&self, fields: &BTreeSet<String>) -> UserProfile {
        let keep = |f: &str| fields.contains(f);
        UserProfile {
            user_id: self.user_id.clone(),
            name: self.name.clone().filter(|_| keep(NAME)),
            nationality: self.nationality.clone().filter(|_| keep(NATIONALITY)),
            contact_number: self.contact_number.clone().filter(|_| keep(CONTACT_NUMBER)),
            purpose_of_visit: self.purpose_of_visit.clone().filter(|_| keep(PURPOSE_OF_VISIT)),
            stay_from: self.stay_from.filter(|_| keep(STAY_FROM)),
            stay_to: self.stay_to.filter(|_| keep(STAY_TO)),
            share_flags: BTreeMap::new(),
        }
    }

    fn set_text(&mut self, field: &str, value: String) -> Result<(), ValidationError> {
        let value = sanitize(&value);
        match field {
            NAME => self.name = Some(value),
            NATIONALITY => self.nationality = Some(value),
            CONTACT_NUMBER => self.contact_number = Some(value),
            PURPOSE_OF_VISIT => self.purpose_of_visit = Some(value),
            STAY_FROM => self.stay_from = Some(parse_date(STAY_FROM, &value)?),
            STAY_TO => self.stay_to = Some(parse_date(STAY_TO, &value)?),
            _ => unreachable!("caller checks the field name"),
        }
        Ok(())
    }

    /// Rules for whatever fields are present.
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.user_id.is_empty() {
            return Err(ValidationError::new("user_id", "must be non-empty"));
        }
        if let Some(name) = &self.name {
            if name.is_empty() {
                return Err(ValidationError::new(NAME, "must be non-empty"));
            }
        }
        if let Some(contact) = &self.contact_number {
            let len = contact.chars().count();
            if !(7..=20).contains(&len) {
                return Err(ValidationError::new(
                    CONTACT_NUMBER,
                    format!("length {len} is outside 7..=20"),
                ));
            }
            if let Some(c) = contact
                .chars()
                .find(|c| !(c.is_ascii_digit() || matches!(c, '+' | '-' | ' ')))
            {
                return Err(ValidationError::new(
                    CONTACT_NUMBER,
                    format!("character {c:?} is not allowed"),
                ));
            }
        }
        if let (Some(from), Some(to)) = (self.stay_from, self.stay_to) {
            if to < from {
                return Err(ValidationError::new(STAY_TO, "must not precede stay_from"));
            }
        }
        Ok(())
    }
}

/// Strips control characters, then surrounding whitespace.
pub fn sanitize(s: &str) -> String {
    let stripped: String = s.chars().filter(|c| !c.is_control()).collect();
    stripped.trim().to_owned()
}

fn parse_date(field: &str, s: &str) -> Result<NaiveDate, ValidationError> {
    NaiveDate::parse_from_str(s, DATE_FORMAT)
        .map_err(|_| ValidationError::new(field, format!("{s:?} is not a YYYY-MM-DD date")))
}

/// Canonical document holding `fields` of `profile`. Fields without a value
/// are omitted.
pub fn to_open_format<S: AsRef<str>>(
    profile: &UserProfile,
    fields: &[S],
) -> Result<Vec<u8>, EnterpriseError> {
    // serde_json's default map is ordered by key, which gives the canonical
    // key order for free.
    let mut doc = serde_json::Map::new();
    doc.insert("format".into(), Value::String(FORMAT_TAG.into()));
    doc.insert("user_id".into(), Value::String(profile.user_id.clone()));
    for f in fields {
        let f = f.as_ref();
        if !PROFILE_FIELDS.contains(&f) {
            return Err(EnterpriseError::UnknownField(f.to_owned()));
        }
        if let Some(v) = profile.field(f) {
            doc.insert(f.to_owned(), Value::String(v));
        }
    }
    Ok(serde_json::to_vec(&Value::Object(doc)).expect("string map always serializes"))
}

/// Parses, sanitizes and validates a document into a (possibly partial)
/// profile.
pub fn from_open_format(bytes: &[u8]) -> Result<UserProfile, EnterpriseError> {
    let invalid = |field: &str, reason: &str| EnterpriseError::from(ValidationError::new(field, reason));
    let value: Value =
        serde_json::from_slice(bytes).map_err(|e| invalid("document", &e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(invalid("document", "not a JSON object"));
    };
    match map.get("format") {
        Some(Value::String(tag)) if tag == FORMAT_TAG => {}
        _ => return Err(invalid("format", "missing or unsupported format tag")),
    }
    let mut profile = match map.get("user_id") {
        Some(Value::String(id)) => UserProfile {
            user_id: sanitize(id),
            ..UserProfile::default()
        },
        _ => return Err(invalid("user_id", "missing or not a string")),
    };
    for (key, value) in &map {
        if key == "format" || key == "user_id" {
            continue;
        }
        let field = PROFILE_FIELDS
            .into_iter()
            .find(|f| f == key)
            .ok_or_else(|| EnterpriseError::UnknownField(key.clone()))?;
        let Value::String(text) = value else {
            return Err(invalid(field, "not a string"));
        };
        profile.set_text(field, text.clone())?;
    }
    profile.validate()?;
    Ok(profile)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum Provenance {
    Local,
    Imported { from: Address, item_id: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Repository {
    records: BTreeMap<String, UserProfile>,
    provenance: BTreeMap<String, Provenance>,
}

impl Repository {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self, EnterpriseError> {
        match fs::read(path) {
            Ok(bytes) => Ok(serde_json::from_slice(&bytes)?),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Self::new()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), EnterpriseError> {
        let text = serde_json::to_string_pretty(self)?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, text)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn get(&self, user_id: &str) -> Option<&UserProfile> {
        self.records.get(user_id)
    }

    pub fn provenance(&self, user_id: &str) -> Option<&Provenance> {
        self.provenance.get(user_id)
    }

    pub fn records(&self) -> impl Iterator<Item = &UserProfile> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Stores a complete profile from an open-data document. Every field is
    /// required; share flags start out false.
    pub fn ingest(&mut self, document: &[u8]) -> Result<UserProfile, EnterpriseError> {
        let mut profile = from_open_format(document)?;
        if let Some(missing) = PROFILE_FIELDS.into_iter().find(|f| profile.field(f).is_none()) {
            return Err(ValidationError::new(missing, "required").into());
        }
        profile.share_flags = PROFILE_FIELDS.iter().map(|f| (f.to_string(), false)).collect();
        self.records.insert(profile.user_id.clone(), profile.clone());
        self.provenance.insert(profile.user_id.clone(), Provenance::Local);
        Ok(profile)
    }

    /// Marks a field shareable iff some ACTIVE consent record of the user
    /// covers it.
    pub fn refresh_share_flags(&mut self, user_id: &str, consent: &ConsentTable) {
        let Some(profile) = self.records.get_mut(user_id) else {
            return;
        };
        let allowed: BTreeSet<&String> = consent
            .records()
            .filter(|r| r.user_id == user_id && r.state == ConsentState::Active)
            .flat_map(|r| r.allowed_fields.iter())
            .collect();
        for f in PROFILE_FIELDS {
            profile
                .share_flags
                .insert(f.to_owned(), allowed.contains(&f.to_string()));
        }
    }

    /// Fields every recipient may receive: the intersection of their
    /// consented sets, limited to fields the profile holds.
    pub fn shareable_fields(
        &self,
        user_id: &str,
        consent: &ConsentTable,
        recipients: &[Address],
    ) -> Result<BTreeSet<String>, EnterpriseError> {
        let profile = self
            .get(user_id)
            .ok_or_else(|| EnterpriseError::UnknownUser(user_id.to_owned()))?;
        let mut common: BTreeSet<String> =
            profile.present_fields().into_iter().map(str::to_owned).collect();
        for r in recipients {
            let allowed = consent.active_fields(user_id, r).ok_or_else(|| ConsentDenied {
                user_id: user_id.to_owned(),
                grantee: r.clone(),
                missing: common.clone(),
            })?;
            common = common.intersection(&allowed).cloned().collect();
        }
        if common.is_empty() {
            return Err(EnterpriseError::NoCommonFields);
        }
        Ok(common)
    }

    /// Shares the consented projection of a profile with `recipients`;
    /// returns the item id.
    pub fn publish_profile<R: RngCore + CryptoRng>(
        &self,
        node: &mut Node,
        rng: &mut R,
        user_id: &str,
        recipients: &[Address],
    ) -> Result<String, EnterpriseError> {
        let fields = self.shareable_fields(user_id, node.chain().state().consent(), recipients)?;
        let fields: Vec<String> = fields.into_iter().collect();
        let profile = self.get(user_id).expect("checked by shareable_fields");
        let doc = to_open_format(profile, &fields)?;
        let scope = ConsentScope {
            user_id: user_id.to_owned(),
            fields,
        };
        Ok(share_data(node, rng, &doc, recipients, Some(&scope))?.item_id)
    }

    /// Decrypts, validates and stores a shared profile. Nothing is stored
    /// unless every step succeeds.
    pub fn import_profile(&mut self, node: &Node, item_id: &str) -> Result<UserProfile, EnterpriseError> {
        let opened = open_shared(node, item_id)?;
        let profile = from_open_format(&opened.plaintext)?;
        self.records.insert(profile.user_id.clone(), profile.clone());
        self.provenance.insert(
            profile.user_id.clone(),
            Provenance::Imported {
                from: opened.publisher,
                item_id: item_id.to_owned(),
            },
        );
        Ok(profile)
    }
}
