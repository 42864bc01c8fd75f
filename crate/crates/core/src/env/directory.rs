use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geometry::AgentId;

pub const BROADCAST: &str = "*";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupCommand {
    Create,
    Join,
    Leave,
    Dissolve,
}

impl GroupCommand {
    pub fn parse(s: &str) -> Option<GroupCommand> {
        Some(match s {
            "create" => GroupCommand::Create,
            "join" => GroupCommand::Join,
            "leave" => GroupCommand::Leave,
            "dissolve" => GroupCommand::Dissolve,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GroupCommand::Create => "create",
            GroupCommand::Join => "join",
            GroupCommand::Leave => "leave",
            GroupCommand::Dissolve => "dissolve",
        }
    }
}

/// Outcome of resolving a destination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Route {
    Recipients(Vec<AgentId>),
    Unknown,
}

/// Agent names and groups.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Directory {
    names: BTreeMap<String, AgentId>,
    order: Vec<String>,
    groups: BTreeMap<String, BTreeSet<AgentId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DirectoryError {
    #[error("name `{0}` is already registered")]
    DuplicateName(String),
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("group name `{0}` clashes with an agent or is reserved")]
    BadGroupName(String),
    #[error("group `{0}` already exists")]
    GroupExists(String),
    #[error("unknown group `{0}`")]
    UnknownGroup(String),
}

impl Directory {
    /// Ids are dense in registration order.
    pub fn register(&mut self, name: &str) -> Result<AgentId, DirectoryError> {
        if self.names.contains_key(name) || self.groups.contains_key(name) || name == BROADCAST {
            return Err(DirectoryError::DuplicateName(name.to_string()));
        }
        let id = AgentId(self.order.len() as u32);
        self.names.insert(name.to_string(), id);
        self.order.push(name.to_string());
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<AgentId> {
        self.names.get(name).copied()
    }

    pub fn name(&self, id: AgentId) -> Option<&str> {
        self.order.get(id.0 as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn members(&self, group: &str) -> Option<&BTreeSet<AgentId>> {
        self.groups.get(group)
    }

    pub fn groups(&self) -> impl Iterator<Item = (&str, &BTreeSet<AgentId>)> {
        self.groups.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Apply a group command. `Ok(Some(note))` reports a tolerated no-op.
    pub fn manage_group(
        &mut self,
        command: GroupCommand,
        group: &str,
        agent: Option<&str>,
    ) -> Result<Option<String>, DirectoryError> {
        if self.names.contains_key(group) || group == BROADCAST || group.is_empty() {
            return Err(DirectoryError::BadGroupName(group.to_string()));
        }
        let member = match agent {
            Some(a) => Some(self.id(a).ok_or_else(|| DirectoryError::UnknownAgent(a.to_string()))?),
            None => None,
        };
        match command {
            GroupCommand::Create => {
                if self.groups.contains_key(group) {
                    return Err(DirectoryError::GroupExists(group.to_string()));
                }
                let mut set = BTreeSet::new();
                set.extend(member);
                self.groups.insert(group.to_string(), set);
                Ok(None)
            }
            GroupCommand::Join => {
                let set = self.groups.entry(group.to_string()).or_default();
                set.extend(member);
                Ok(None)
            }
            GroupCommand::Leave => {
                let removed = match (self.groups.get_mut(group), member) {
                    (Some(set), Some(id)) => set.remove(&id),
                    _ => false,
                };
                Ok((!removed).then(|| format!("`{}` is not a member of `{group}`", agent.unwrap_or(NO_MEMBER))))
            }
            GroupCommand::Dissolve => {
                if self.groups.remove(group).is_none() {
                    return Err(DirectoryError::UnknownGroup(group.to_string()));
                }
                Ok(None)
            }
        }
    }

    /// Resolve a destination: an agent, a group (minus the sender), or broadcast (minus the sender).
    pub fn resolve(&self, sender: AgentId, dest: &str) -> Route {
        if dest == BROADCAST {
            return Route::Recipients(
                (0..self.order.len() as u32)
                    .map(AgentId)
                    .filter(|id| *id != sender)
                    .collect(),
            );
        }
        if let Some(id) = self.id(dest) {
            return Route::Recipients(vec![id]);
        }
        match self.groups.get(dest) {
            Some(set) => Route::Recipients(set.iter().copied().filter(|id| *id != sender).collect()),
            None => Route::Unknown,
        }
    }
}

const NO_MEMBER: &str = "?";

#[cfg(test)]
mod tests {
    use super::*;

    fn dir(names: &[&str]) -> Directory {
        let mut d = Directory::default();
        for n in names {
            d.register(n).unwrap();
        }
        d
    }

    #[test]
    fn dense_ids() {
        let mut d = Directory::default();
        assert_eq!(d.register("a").unwrap(), AgentId(0));
        assert_eq!(d.register("b").unwrap(), AgentId(1));
        assert_eq!(d.register("a"), Err(DirectoryError::DuplicateName("a".into())));
        assert_eq!(d.name(AgentId(1)), Some("b"));
    }

    #[test]
    fn group_lifecycle() {
        let mut d = dir(&["a", "b", "c"]);
        d.manage_group(GroupCommand::Create, "team", None).unwrap();
        d.manage_group(GroupCommand::Join, "team", Some("a")).unwrap();
        d.manage_group(GroupCommand::Join, "team", Some("b")).unwrap();
        assert_eq!(d.members("team").unwrap().len(), 2);
        assert_eq!(d.resolve(AgentId(0), "team"), Route::Recipients(vec![AgentId(1)]));
        d.manage_group(GroupCommand::Leave, "team", Some("b")).unwrap();
        assert_eq!(d.resolve(AgentId(2), "team"), Route::Recipients(vec![AgentId(0)]));
        assert!(d
            .manage_group(GroupCommand::Leave, "team", Some("c"))
            .unwrap()
            .is_some());
        d.manage_group(GroupCommand::Dissolve, "team", None).unwrap();
        assert_eq!(d.resolve(AgentId(0), "team"), Route::Unknown);
    }

    #[test]
    fn join_creates_group() {
        let mut d = dir(&["a", "b", "c"]);
        d.manage_group(GroupCommand::Join, "g", Some("c")).unwrap();
        assert_eq!(d.resolve(AgentId(0), "g"), Route::Recipients(vec![AgentId(2)]));
    }

    #[test]
    fn broadcast_and_named() {
        let d = dir(&["a", "b", "c"]);
        assert_eq!(
            d.resolve(AgentId(1), "*"),
            Route::Recipients(vec![AgentId(0), AgentId(2)])
        );
        assert_eq!(d.resolve(AgentId(1), "c"), Route::Recipients(vec![AgentId(2)]));
        assert_eq!(d.resolve(AgentId(1), "zed"), Route::Unknown);
    }

    #[test]
    fn group_names_disjoint_from_agents() {
        let mut d = dir(&["a"]);
        assert!(d.manage_group(GroupCommand::Create, "a", None).is_err());
        d.manage_group(GroupCommand::Create, "g", None).unwrap();
        assert!(d.register("g").is_err());
    }
}
