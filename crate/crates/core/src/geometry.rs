//! Millimetre-space virtual QWERTY layouts and nearest-center key registration.
//!
//! Frame: the center of `q` sits at the layout origin, `+x` points right and
//! `+y` points down. Letter rows use a uniform pitch; row 2 is shifted by half
//! a column pitch and row 3 by a full column pitch. Backspace ends row 3, the
//! space bar and submit key form a fourth row and two suggestion buttons sit
//! one row above the letters.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Letter rows of the QWERTY block, top to bottom.
pub const QWERTY_ROWS: [&str; 3] = ["qwertyuiop", "asdfghjkl", "zxcvbnm"];

/// Horizontal offset of each letter row in column pitches.
pub const ROW_OFFSETS: [f64; 3] = [0.0, 0.5, 1.0];

const LETTER_NAMES: [&str; 26] = [
    "a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l", "m", "n", "o", "p", "q", "r", "s",
    "t", "u", "v", "w", "x", "y", "z",
];

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("unknown layout preset `{0}` (expected `original`, `enlarged` or `custom`)")]
    UnknownPreset(String),
    #[error("dimension `{name}` must be positive, got {value}")]
    NonPositiveDimension { name: &'static str, value: f64 },
    #[error("custom layout requires `{0}`")]
    MissingDimension(&'static str),
    #[error("unknown key label `{0}`")]
    UnknownLabel(String),
    #[error("invalid layout: {0}")]
    Invalid(String),
    #[error("layout document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("layout file: {0}")]
    Io(#[from] std::io::Error),
}

/// A point on the keyboard plane, in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TouchPoint {
    pub x: f64,
    pub y: f64,
}

impl TouchPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance_sq(&self, other: &TouchPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(&self, other: &TouchPoint) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn midpoint(&self, other: &TouchPoint) -> TouchPoint {
        TouchPoint::new((self.x + other.x) / 2.0, (self.y + other.y) / 2.0)
    }

    pub fn offset(&self, dx: f64, dy: f64) -> TouchPoint {
        TouchPoint::new(self.x + dx, self.y + dy)
    }

    pub fn scaled(&self, factor: f64) -> TouchPoint {
        TouchPoint::new(self.x * factor, self.y * factor)
    }
}

/// Identifier of a key on the virtual keyboard.
///
/// Labels order by their textual form, which is the tie-break order used by
/// registration and decoding (`"backspace" < "j" < "k" < "space"`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KeyLabel {
    /// Lowercase ASCII letter.
    Letter(u8),
    Space,
    Backspace,
    Submit,
    /// Suggestion button slot, 0 = left (best), 1 = right.
    Suggestion(u8),
}

impl KeyLabel {
    /// Letter label for `c`, if `c` is an ASCII lowercase letter.
    pub fn letter(c: char) -> Option<KeyLabel> {
        c.is_ascii_lowercase().then_some(KeyLabel::Letter(c as u8))
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            KeyLabel::Letter(b) => LETTER_NAMES[(b - b'a') as usize],
            KeyLabel::Space => "space",
            KeyLabel::Backspace => "backspace",
            KeyLabel::Submit => "submit",
            KeyLabel::Suggestion(0) => "suggestion-0",
            KeyLabel::Suggestion(_) => "suggestion-1",
        }
    }

    pub fn as_letter(&self) -> Option<char> {
        match self {
            KeyLabel::Letter(b) => Some(*b as char),
            _ => None,
        }
    }

    pub fn is_letter(&self) -> bool {
        matches!(self, KeyLabel::Letter(_))
    }

    pub fn class(&self) -> KeyClass {
        match self {
            KeyLabel::Letter(_) => KeyClass::Letters,
            KeyLabel::Submit => KeyClass::All,
            _ => KeyClass::Typing,
        }
    }
}

impl Ord for KeyLabel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.as_str().cmp(other.as_str())
    }
}

impl PartialOrd for KeyLabel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for KeyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KeyLabel {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if let Some(label) = KeyLabel::letter(c) {
                return Ok(label);
            }
        }
        match s {
            "space" => Ok(KeyLabel::Space),
            "backspace" => Ok(KeyLabel::Backspace),
            "submit" => Ok(KeyLabel::Submit),
            "suggestion-0" => Ok(KeyLabel::Suggestion(0)),
            "suggestion-1" => Ok(KeyLabel::Suggestion(1)),
            _ => Err(GeometryError::UnknownLabel(s.to_string())),
        }
    }
}

impl TryFrom<String> for KeyLabel {
    type Error = GeometryError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<KeyLabel> for String {
    fn from(value: KeyLabel) -> Self {
        value.as_str().to_string()
    }
}

/// Nested key-class filter for registration.
///
/// `Letters` ⊂ `Typing` ⊂ `All`: typing keys add space, backspace and the
/// suggestion buttons; `All` adds the submit key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyClass {
    Letters,
    Typing,
    All,
}

impl KeyClass {
    pub fn admits(&self, label: KeyLabel) -> bool {
        label.class() <= *self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Key {
    pub label: KeyLabel,
    pub center: TouchPoint,
    pub width: f64,
    pub height: f64,
}

impl Key {
    /// Whether `p` lies inside the key rectangle (edges inclusive).
    pub fn contains(&self, p: &TouchPoint) -> bool {
        (p.x - self.center.x).abs() <= self.width / 2.0
            && (p.y - self.center.y).abs() <= self.height / 2.0
    }

    fn overlaps(&self, other: &Key) -> bool {
        let eps = 1e-9;
        (self.center.x - other.center.x).abs() < (self.width + other.width) / 2.0 - eps
            && (self.center.y - other.center.y).abs() < (self.height + other.height) / 2.0 - eps
    }
}

/// Optional dimension overrides for [`build_layout`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LayoutOverrides {
    pub key_width: Option<f64>,
    pub key_gap: Option<f64>,
    pub row_pitch: Option<f64>,
    pub origin: Option<TouchPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyboardLayout {
    name: String,
    key_width: f64,
    key_gap: f64,
    column_pitch: f64,
    row_pitch: f64,
    origin: TouchPoint,
    keys: Vec<Key>,
}

#[derive(Deserialize)]
struct RawLayout {
    name: String,
    key_width: f64,
    key_gap: f64,
    column_pitch: f64,
    row_pitch: f64,
    origin: TouchPoint,
    keys: Vec<Key>,
}

impl<'de> Deserialize<'de> for KeyboardLayout {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawLayout::deserialize(deserializer)?;
        let layout = KeyboardLayout {
            name: raw.name,
            key_width: raw.key_width,
            key_gap: raw.key_gap,
            column_pitch: raw.column_pitch,
            row_pitch: raw.row_pitch,
            origin: raw.origin,
            keys: raw.keys,
        };
        layout.validate().map_err(serde::de::Error::custom)?;
        Ok(layout)
    }
}

/// Builds a preset (`original`, `enlarged`) or `custom` layout.
///
/// Presets accept overrides for any dimension; `custom` requires at least
/// `key_width` and `key_gap`.
pub fn build_layout(name: &str, overrides: &LayoutOverrides) -> Result<KeyboardLayout, GeometryError> {
    let (width, gap) = match name {
        "original" => (5.5, 1.0),
        "enlarged" => (6.0, 2.0),
        "custom" => (
            overrides.key_width.ok_or(GeometryError::MissingDimension("key_width"))?,
            overrides.key_gap.ok_or(GeometryError::MissingDimension("key_gap"))?,
        ),
        other => return Err(GeometryError::UnknownPreset(other.to_string())),
    };
    let width = overrides.key_width.unwrap_or(width);
    let gap = overrides.key_gap.unwrap_or(gap);
    if !(width > 0.0) || !width.is_finite() {
        return Err(GeometryError::NonPositiveDimension { name: "key_width", value: width });
    }
    if !(gap >= 0.0) || !gap.is_finite() {
        return Err(GeometryError::NonPositiveDimension { name: "key_gap", value: gap });
    }
    let pitch = width + gap;
    let row_pitch = overrides.row_pitch.unwrap_or(pitch);
    if !(row_pitch > 0.0) || !row_pitch.is_finite() {
        return Err(GeometryError::NonPositiveDimension { name: "row_pitch", value: row_pitch });
    }
    let origin = overrides.origin.unwrap_or_default();
    let layout = KeyboardLayout {
        name: name.to_string(),
        key_width: width,
        key_gap: gap,
        column_pitch: pitch,
        row_pitch,
        origin,
        keys: qwerty_keys(width, gap, row_pitch, origin),
    };
    layout.validate()?;
    Ok(layout)
}

fn qwerty_keys(width: f64, gap: f64, row_pitch: f64, origin: TouchPoint) -> Vec<Key> {
    let pitch = width + gap;
    let at = |col: f64, row: f64| TouchPoint::new(origin.x + col * pitch, origin.y + row * row_pitch);
    let mut keys = Vec::with_capacity(32);

    // Suggestion bar: two buttons splitting the letter-block width.
    let left = -width / 2.0;
    let right = 9.0 * pitch + width / 2.0;
    let half = (right - left - gap) / 2.0;
    for slot in 0..2u8 {
        let x0 = left + slot as f64 * (half + gap);
        keys.push(Key {
            label: KeyLabel::Suggestion(slot),
            center: TouchPoint::new(origin.x + x0 + half / 2.0, origin.y - row_pitch),
            width: half,
            height: width,
        });
    }

    for (row, (letters, offset)) in QWERTY_ROWS.iter().zip(ROW_OFFSETS).enumerate() {
        for (col, c) in letters.bytes().enumerate() {
            keys.push(Key {
                label: KeyLabel::Letter(c),
                center: at(col as f64 + offset, row as f64),
                width,
                height: width,
            });
        }
    }

    // Backspace fills row 3 from one gap right of `m` to the block's right edge.
    let bs_left = 7.0 * pitch + width / 2.0 + gap;
    keys.push(Key {
        label: KeyLabel::Backspace,
        center: TouchPoint::new(origin.x + (bs_left + right) / 2.0, origin.y + 2.0 * row_pitch),
        width: right - bs_left,
        height: width,
    });

    // Space spans the columns of `x` through `m`; submit takes the rest of the row.
    let space_left = 1.5 * pitch - width / 2.0;
    let space_right = 6.5 * pitch + width / 2.0;
    keys.push(Key {
        label: KeyLabel::Space,
        center: TouchPoint::new(origin.x + (space_left + space_right) / 2.0, origin.y + 3.0 * row_pitch),
        width: space_right - space_left,
        height: width,
    });
    let submit_left = space_right + gap;
    keys.push(Key {
        label: KeyLabel::Submit,
        center: TouchPoint::new(origin.x + (submit_left + right) / 2.0, origin.y + 3.0 * row_pitch),
        width: right - submit_left,
        height: width,
    });
    keys
}

impl KeyboardLayout {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn key_width(&self) -> f64 {
        self.key_width
    }

    pub fn key_gap(&self) -> f64 {
        self.key_gap
    }

    pub fn column_pitch(&self) -> f64 {
        self.column_pitch
    }

    pub fn row_pitch(&self) -> f64 {
        self.row_pitch
    }

    pub fn origin(&self) -> TouchPoint {
        self.origin
    }

    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    pub fn key(&self, label: KeyLabel) -> Option<&Key> {
        self.keys.iter().find(|k| k.label == label)
    }

    /// Center of the key labelled `label`.
    pub fn key_center(&self, label: &str) -> Result<TouchPoint, GeometryError> {
        let label: KeyLabel = label.parse()?;
        self.center_of(label)
    }

    pub fn center_of(&self, label: KeyLabel) -> Result<TouchPoint, GeometryError> {
        self.key(label)
            .map(|k| k.center)
            .ok_or_else(|| GeometryError::UnknownLabel(label.to_string()))
    }

    /// Centers of the 26 letter keys, indexed `a..=z`.
    pub fn letter_centers(&self) -> [TouchPoint; 26] {
        let mut out = [TouchPoint::default(); 26];
        for key in &self.keys {
            if let KeyLabel::Letter(b) = key.label {
                out[(b - b'a') as usize] = key.center;
            }
        }
        out
    }

    /// Key in `class` whose center is closest to `p`; ties go to the
    /// smallest label.
    pub fn nearest_key(&self, p: &TouchPoint, class: KeyClass) -> &Key {
        self.keys
            .iter()
            .filter(|k| class.admits(k.label))
            .map(|k| (k.center.distance_sq(p), k))
            .min_by(|(da, ka), (db, kb)| da.total_cmp(db).then_with(|| ka.label.cmp(&kb.label)))
            .map(|(_, k)| k)
            .expect("every key class contains the letter keys")
    }

    /// Returns a copy with every coordinate and dimension multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> KeyboardLayout {
        KeyboardLayout {
            name: self.name.clone(),
            key_width: self.key_width * factor,
            key_gap: self.key_gap * factor,
            column_pitch: self.column_pitch * factor,
            row_pitch: self.row_pitch * factor,
            origin: self.origin.scaled(factor),
            keys: self
                .keys
                .iter()
                .map(|k| Key {
                    label: k.label,
                    center: k.center.scaled(factor),
                    width: k.width * factor,
                    height: k.height * factor,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let invalid = |msg: String| Err(GeometryError::Invalid(msg));
        if !(self.key_width > 0.0) || !(self.row_pitch > 0.0) || !(self.key_gap >= 0.0) {
            return invalid("dimensions must be positive".into());
        }
        if self.column_pitch != self.key_width + self.key_gap {
            return invalid(format!(
                "column pitch {} != key width {} + gap {}",
                self.column_pitch, self.key_width, self.key_gap
            ));
        }
        let mut labels: Vec<KeyLabel> = self.keys.iter().map(|k| k.label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return invalid(format!("duplicate key `{}`", w[0]));
        }
        for key in &self.keys {
            if !(key.width > 0.0) || !(key.height > 0.0) || !key.center.is_finite() {
                return invalid(format!("key `{}` has a degenerate rectangle", key.label));
            }
        }
        for (row, (letters, offset)) in QWERTY_ROWS.iter().zip(ROW_OFFSETS).enumerate() {
            for (col, c) in letters.bytes().enumerate() {
                let Some(key) = self.key(KeyLabel::Letter(c)) else {
                    return invalid(format!("missing letter `{}`", c as char));
                };
                let want = TouchPoint::new(
                    self.origin.x + (col as f64 + offset) * self.column_pitch,
                    self.origin.y + row as f64 * self.row_pitch,
                );
                if key.center.distance(&want) > 1e-9 {
                    return invalid(format!("letter `{}` is off the QWERTY grid", c as char));
                }
            }
        }
        for (label, row) in [(KeyLabel::Suggestion(0), -1.0), (KeyLabel::Suggestion(1), -1.0)] {
            match self.key(label) {
                Some(k) if (k.center.y - (self.origin.y + row * self.row_pitch)).abs() <= 1e-9 => {}
                Some(_) => return invalid(format!("`{label}` must sit one row above the letters")),
                None => return invalid(format!("missing `{label}`")),
            }
        }
        for (i, a) in self.keys.iter().enumerate() {
            for b in &self.keys[i + 1..] {
                if a.overlaps(b) {
                    return invalid(format!("keys `{}` and `{}` overlap", a.label, b.label));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }

    pub fn from_json(text: &str) -> Result<KeyboardLayout, GeometryError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<KeyboardLayout, GeometryError> {
        KeyboardLayout::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), GeometryError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

/// Resolves a layout argument: a preset name or a path to a layout document.
pub fn resolve_layout(spec: &str) -> Result<KeyboardLayout, GeometryError> {
    match spec {
        "original" | "enlarged" => build_layout(spec, &LayoutOverrides::default()),
        path if Path::new(path).exists() => KeyboardLayout::load(Path::new(path)),
        other => Err(GeometryError::UnknownPreset(other.to_string())),
    }
}
