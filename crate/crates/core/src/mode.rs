use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The three alternatives of the Swissmetro survey.
///
/// The declaration order is the tie-breaking order used everywhere a
/// deterministic choice among modes is needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModeLabel {
    Train,
    Car,
    Swissmetro,
}

impl ModeLabel {
    pub const ALL: [ModeLabel; 3] = [ModeLabel::Train, ModeLabel::Car, ModeLabel::Swissmetro];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ModeLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ModeLabel::Train => "Train",
            ModeLabel::Car => "Car",
            ModeLabel::Swissmetro => "Swissmetro",
        }
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown travel mode `{0}`")]
pub struct UnknownMode(pub String);

impl FromStr for ModeLabel {
    type Err = UnknownMode;

    /// Case-insensitive match on the full mode name.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(ModeLabel::Train),
            "car" => Ok(ModeLabel::Car),
            "swissmetro" => Ok(ModeLabel::Swissmetro),
            _ => Err(UnknownMode(s.to_string())),
        }
    }
}

/// One value per mode, indexable by [`ModeLabel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PerMode<T> {
    #[serde(rename = "Train")]
    pub train: T,
    #[serde(rename = "Car")]
    pub car: T,
    #[serde(rename = "Swissmetro")]
    pub swissmetro: T,
}

impl<T> PerMode<T> {
    pub fn new(train: T, car: T, swissmetro: T) -> Self {
        PerMode { train, car, swissmetro }
    }

    pub fn from_fn(mut f: impl FnMut(ModeLabel) -> T) -> Self {
        PerMode {
            train: f(ModeLabel::Train),
            car: f(ModeLabel::Car),
            swissmetro: f(ModeLabel::Swissmetro),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ModeLabel, &T)> {
        ModeLabel::ALL.into_iter().map(move |m| (m, &self[m]))
    }
}

impl<T> Index<ModeLabel> for PerMode<T> {
    type Output = T;

    fn index(&self, mode: ModeLabel) -> &T {
        match mode {
            ModeLabel::Train => &self.train,
            ModeLabel::Car => &self.car,
            ModeLabel::Swissmetro => &self.swissmetro,
        }
    }
}

impl<T> IndexMut<ModeLabel> for PerMode<T> {
    fn index_mut(&mut self, mode: ModeLabel) -> &mut T {
        match mode {
            ModeLabel::Train => &mut self.train,
            ModeLabel::Car => &mut self.car,
            ModeLabel::Swissmetro => &mut self.swissmetro,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_train_car_swissmetro() {
        let mut v = vec![ModeLabel::Swissmetro, ModeLabel::Train, ModeLabel::Car];
        v.sort();
        assert_eq!(v, ModeLabel::ALL.to_vec());
        for (i, m) in ModeLabel::ALL.iter().enumerate() {
            assert_eq!(m.index(), i);
            assert_eq!(ModeLabel::from_index(i), Some(*m));
        }
        assert_eq!(ModeLabel::from_index(3), None);
    }

    #[test]
    fn parse_is_case_insensitive() {
        assert_eq!("car".parse::<ModeLabel>().unwrap(), ModeLabel::Car);
        assert_eq!(" SWISSMETRO ".parse::<ModeLabel>().unwrap(), ModeLabel::Swissmetro);
        assert!("bus".parse::<ModeLabel>().is_err());
    }
}
