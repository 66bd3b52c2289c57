use std::fmt;

/// FER-2013 label convention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Expression {
    Angry = 0,
    Disgust = 1,
    Fear = 2,
    Happy = 3,
    Sad = 4,
    Surprise = 5,
    Neutral = 6,
}

const ALL: [Expression; 7] = [
    Expression::Angry,
    Expression::Disgust,
    Expression::Fear,
    Expression::Happy,
    Expression::Sad,
    Expression::Surprise,
    Expression::Neutral,
];

impl Expression {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Expression::Angry => "Angry",
            Expression::Disgust => "Disgust",
            Expression::Fear => "Fear",
            Expression::Happy => "Happy",
            Expression::Sad => "Sad",
            Expression::Surprise => "Surprise",
            Expression::Neutral => "Neutral",
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which label vocabulary a file uses. CK+ drops Neutral (and contempt) and
/// keeps indices 0-5.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LabelSet {
    Fer,
    CkPlus,
}

impl LabelSet {
    pub fn num_classes(self) -> usize {
        match self {
            LabelSet::Fer => 7,
            LabelSet::CkPlus => 6,
        }
    }

    pub fn for_classes(n: usize) -> Option<Self> {
        match n {
            7 => Some(LabelSet::Fer),
            6 => Some(LabelSet::CkPlus),
            _ => None,
        }
    }

    pub fn expressions(self) -> &'static [Expression] {
        &ALL[..self.num_classes()]
    }

    pub fn expression(self, index: usize) -> Option<Expression> {
        self.expressions().get(index).copied()
    }

    pub fn index_of(self, name: &str) -> Option<usize> {
        self.expressions()
            .iter()
            .position(|e| e.name().eq_ignore_ascii_case(name))
    }
}
