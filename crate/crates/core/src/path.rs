//! Hierarchical module names and the global rank table built from them.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::kernel::ModuleId;

/// Dot-joined module name such as `net.lan3.host12`.
///
/// Ordering is the byte-wise lexicographic order of the rendered string,
/// which every logical process can reproduce without communication.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModulePath(String);

impl ModulePath {
    pub fn root(name: &str) -> Self {
        debug_assert!(!name.is_empty() && !name.contains('.'));
        ModulePath(String::from(name))
    }

    pub fn child(&self, name: &str) -> Self {
        debug_assert!(!name.is_empty() && !name.contains('.'));
        let mut s = String::with_capacity(self.0.len() + 1 + name.len());
        s.push_str(&self.0);
        s.push('.');
        s.push_str(name);
        ModulePath(s)
    }

    /// Parses a rendered path; segments must be non-empty.
    pub fn parse(rendered: &str) -> Option<Self> {
        if rendered.is_empty() || rendered.split('.').any(str::is_empty) {
            return None;
        }
        Some(ModulePath(String::from(rendered)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.0.split('.')
    }

    pub fn parent(&self) -> Option<ModulePath> {
        self.0.rfind('.').map(|i| ModulePath(String::from(&self.0[..i])))
    }

    pub fn name(&self) -> &str {
        self.0.rsplit('.').next().unwrap_or(&self.0)
    }
}

impl fmt::Display for ModulePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Every event-processing module of a scenario, sorted by path.
///
/// A module's [`ModuleId`] is its index here, so comparing ids compares
/// paths. The table is built from the scenario alone and is therefore the
/// same on every logical process.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PathTable {
    paths: Vec<ModulePath>,
}

impl PathTable {
    pub fn new(mut paths: Vec<ModulePath>) -> Self {
        paths.sort();
        paths.dedup();
        PathTable { paths }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn id(&self, path: &ModulePath) -> Option<ModuleId> {
        self.paths
            .binary_search(path)
            .ok()
            .map(|i| ModuleId(i as u32))
    }

    pub fn path(&self, id: ModuleId) -> &ModulePath {
        &self.paths[id.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ModuleId, &ModulePath)> {
        self.paths
            .iter()
            .enumerate()
            .map(|(i, p)| (ModuleId(i as u32), p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_navigate() {
        let p = ModulePath::root("net").child("lan3").child("host12");
        assert_eq!(p.as_str(), "net.lan3.host12");
        assert_eq!(p.name(), "host12");
        assert_eq!(p.parent().unwrap().as_str(), "net.lan3");
        assert_eq!(p.segments().count(), 3);
        assert!(ModulePath::parse("net..a").is_none());
    }

    #[test]
    fn ids_follow_string_order() {
        let t = PathTable::new(alloc::vec![
            ModulePath::parse("net.b").unwrap(),
            ModulePath::parse("net.a").unwrap(),
            ModulePath::parse("net.a10").unwrap(),
            ModulePath::parse("net.a2").unwrap(),
        ]);
        let names: Vec<&str> = t.iter().map(|(_, p)| p.as_str()).collect();
        assert_eq!(names, ["net.a", "net.a10", "net.a2", "net.b"]);
        assert_eq!(t.id(&ModulePath::parse("net.a2").unwrap()), Some(ModuleId(2)));
    }
}
