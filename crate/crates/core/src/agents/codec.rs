use crate::sim::{Action, PlayerId};

use super::AgentError;

/// Mixed-radix encoding of one action per controlled player into a single
/// joint index. The first player is the most significant digit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointActionCodec {
    agents: Vec<PlayerId>,
}

impl JointActionCodec {
    pub fn new(agents: Vec<PlayerId>) -> Result<Self, AgentError> {
        if agents.is_empty() {
            return Err(AgentError::InvalidConfig("joint action needs at least one player".into()));
        }
        Ok(Self { agents })
    }

    pub fn agents(&self) -> &[PlayerId] {
        &self.agents
    }

    pub fn joint_count(&self) -> usize {
        Action::COUNT.pow(self.agents.len() as u32)
    }

    pub fn encode(&self, actions: &[Action]) -> Result<usize, AgentError> {
        if actions.len() != self.agents.len() {
            return Err(AgentError::OutOfRange {
                index: actions.len(),
                bound: self.agents.len(),
            });
        }
        Ok(actions.iter().fold(0, |acc, a| acc * Action::COUNT + a.index()))
    }

    pub fn decode(&self, index: usize) -> Result<Vec<Action>, AgentError> {
        let bound = self.joint_count();
        if index >= bound {
            return Err(AgentError::OutOfRange { index, bound });
        }
        let mut out = vec![Action::Left; self.agents.len()];
        let mut rest = index;
        for slot in out.iter_mut().rev() {
            *slot = Action::from_index(rest % Action::COUNT).expect("digit below 6");
            rest /= Action::COUNT;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> JointActionCodec {
        JointActionCodec::new(vec![PlayerId::home(0), PlayerId::home(1)]).unwrap()
    }

    #[test]
    fn corner_cases() {
        let c = pair();
        assert_eq!(c.joint_count(), 36);
        assert_eq!(c.encode(&[Action::Left, Action::Left]).unwrap(), 0);
        assert_eq!(c.encode(&[Action::Shoot, Action::Shoot]).unwrap(), 35);
        assert!(c.decode(36).is_err());
        assert!(c.encode(&[Action::Left]).is_err());
    }

    #[test]
    fn round_trips_every_pair() {
        let c = pair();
        let mut seen = std::collections::BTreeSet::new();
        for a in Action::ALL {
            for b in Action::ALL {
                let idx = c.encode(&[a, b]).unwrap();
                assert_eq!(idx, 6 * a.index() + b.index());
                assert_eq!(c.decode(idx).unwrap(), vec![a, b]);
                seen.insert(idx);
            }
        }
        assert_eq!(seen.len(), 36);
    }
}
