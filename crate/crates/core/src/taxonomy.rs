//! Furniture category taxonomy and functional roles.
//!
//! The shipped default has 31 categories grouped the way common indoor
//! datasets are usually merged. It is a reconstruction: users with their own
//! grouping supply a JSON array of `{id, name, roles}` records.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::TaxonomyError;

const DEFAULT_TAXONOMY: &str = include_str!("../assets/taxonomy.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(pub u16);

impl CategoryId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Seat,
    Bed,
    Chair,
    Sofa,
    Table,
    Desk,
    Stand,
    TvStand,
    CeilingLight,
    StandingLight,
    Tv,
    Computer,
    Window,
    Door,
    Supporting,
    Supported,
    Room,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: CategoryId,
    pub name: String,
    pub roles: BTreeSet<Role>,
}

impl Category {
    pub fn has(&self, role: Role) -> bool {
        self.roles.contains(&role)
    }

    /// Doors and windows live on the room boundary.
    pub fn is_boundary(&self) -> bool {
        self.has(Role::Door) || self.has(Role::Window)
    }

    pub fn is_light(&self) -> bool {
        self.has(Role::CeilingLight) || self.has(Role::StandingLight) || self.has(Role::Window)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    categories: Vec<Category>,
    by_name: HashMap<String, CategoryId>,
    room: CategoryId,
}

impl Taxonomy {
    pub fn new(mut categories: Vec<Category>) -> Result<Self, TaxonomyError> {
        categories.sort_by_key(|c| c.id);
        for (i, c) in categories.iter().enumerate() {
            if c.id.index() != i {
                return Err(TaxonomyError::NonDenseIds { expected: i, found: c.id.0 });
            }
            for (role, implied) in [(Role::Bed, Role::Seat), (Role::Chair, Role::Seat), (Role::Sofa, Role::Seat)] {
                if c.has(role) && !c.has(implied) {
                    return Err(TaxonomyError::InconsistentRoles {
                        name: c.name.clone(),
                        detail: format!("{role:?} requires {implied:?}"),
                    });
                }
            }
        }
        let mut by_name = HashMap::new();
        for c in &categories {
            if by_name.insert(c.name.clone(), c.id).is_some() {
                return Err(TaxonomyError::DuplicateName(c.name.clone()));
            }
        }
        let rooms: Vec<_> = categories.iter().filter(|c| c.has(Role::Room)).collect();
        if rooms.len() != 1 {
            return Err(TaxonomyError::RoomCount(rooms.len()));
        }
        let room = rooms[0].id;
        Ok(Taxonomy { categories, by_name, room })
    }

    pub fn from_json(text: &str) -> Result<Self, TaxonomyError> {
        let cats: Vec<Category> = serde_json::from_str(text)?;
        Taxonomy::new(cats)
    }

    pub fn load(path: &Path) -> Result<Self, TaxonomyError> {
        let text = std::fs::read_to_string(path)?;
        Taxonomy::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.categories).expect("taxonomy serializes")
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn get(&self, id: CategoryId) -> Option<&Category> {
        self.categories.get(id.index())
    }

    pub fn contains(&self, id: CategoryId) -> bool {
        id.index() < self.categories.len()
    }

    pub fn by_name(&self, name: &str) -> Option<CategoryId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: CategoryId) -> &str {
        self.get(id).map(|c| c.name.as_str()).unwrap_or("?")
    }

    pub fn room(&self) -> CategoryId {
        self.room
    }

    pub fn has(&self, id: CategoryId, role: Role) -> bool {
        self.get(id).is_some_and(|c| c.has(role))
    }

    pub fn is_boundary(&self, id: CategoryId) -> bool {
        self.get(id).is_some_and(Category::is_boundary)
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = CategoryId> + '_ {
        self.categories.iter().filter(move |c| c.has(role)).map(|c| c.id)
    }

    /// Category by name; panics on a missing name. Meant for the built-in
    /// taxonomy and tests.
    pub fn id(&self, name: &str) -> CategoryId {
        self.by_name(name).unwrap_or_else(|| panic!("unknown category {name}"))
    }
}

impl Default for Taxonomy {
    fn default() -> Self {
        Taxonomy::from_json(DEFAULT_TAXONOMY).expect("built-in taxonomy is valid")
    }
}

/// Ordering priority of categories inside a sequence.
///
/// The room always comes first, followed by doors and windows (so a
/// room-conditioned prefix is contiguous), then the remaining categories in
/// descending mean footprint area.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryOrder {
    order: Vec<CategoryId>,
    #[serde(skip)]
    rank: Vec<usize>,
}

impl CategoryOrder {
    pub fn new(order: Vec<CategoryId>, n_categories: usize) -> Self {
        let mut rank = vec![usize::MAX; n_categories];
        for (r, c) in order.iter().enumerate() {
            if c.index() < n_categories {
                rank[c.index()] = r;
            }
        }
        // Categories missing from the list sort last, by id.
        let mut next = order.len();
        for r in rank.iter_mut() {
            if *r == usize::MAX {
                *r = next;
                next += 1;
            }
        }
        CategoryOrder { order, rank }
    }

    /// Derive the order from mean footprint areas over a set of layouts.
    pub fn from_layouts<'a>(
        layouts: impl IntoIterator<Item = &'a crate::layout::Layout>,
        taxonomy: &Taxonomy,
    ) -> Self {
        let n = taxonomy.len();
        let mut sum = vec![0.0f64; n];
        let mut count = vec![0usize; n];
        for layout in layouts {
            for obj in layout.furniture() {
                let i = obj.category.index();
                if i < n {
                    sum[i] += obj.width * obj.depth;
                    count[i] += 1;
                }
            }
        }
        let head: Vec<CategoryId> = std::iter::once(taxonomy.room())
            .chain(taxonomy.with_role(Role::Door))
            .chain(taxonomy.with_role(Role::Window))
            .collect();
        let mut rest: Vec<(CategoryId, f64)> = taxonomy
            .categories()
            .iter()
            .filter(|c| !head.contains(&c.id) && count[c.id.index()] > 0)
            .map(|c| (c.id, sum[c.id.index()] / count[c.id.index()] as f64))
            .collect();
        rest.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let order = head.into_iter().chain(rest.into_iter().map(|(c, _)| c)).collect();
        CategoryOrder::new(order, n)
    }

    pub fn from_json(text: &str, taxonomy: &Taxonomy) -> Result<Self, TaxonomyError> {
        let order: Vec<CategoryId> = serde_json::from_str(text)?;
        Ok(CategoryOrder::new(order, taxonomy.len()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.order).expect("order serializes")
    }

    pub fn rank(&self, id: CategoryId) -> usize {
        self.rank.get(id.index()).copied().unwrap_or(usize::MAX)
    }

    pub fn as_slice(&self) -> &[CategoryId] {
        &self.order
    }
}

impl CategoryOrder {
    /// Frozen order for the built-in taxonomy, computed from the synthetic
    /// corpus (`ergoscene synth-corpus` then `preprocess --emit-order`).
    pub fn default_for(taxonomy: &Taxonomy) -> Self {
        const FROZEN: &[&str] = &[
            "room",
            "door",
            "window",
            "sectional_sofa",
            "double_bed",
            "dining_table",
            "single_bed",
            "kids_bed",
            "sofa",
            "wardrobe",
            "bookshelf",
            "desk",
            "tv_stand",
            "dresser",
            "coffee_table",
            "cabinet",
            "console_table",
            "children_cabinet",
            "armchair",
            "ceiling_lamp",
            "pendant_lamp",
            "ottoman",
            "chair",
            "nightstand",
            "side_table",
            "tv",
            "plant",
            "stool",
            "floor_lamp",
            "computer",
            "table_lamp",
        ];
        let order = FROZEN.iter().filter_map(|n| taxonomy.by_name(n)).collect();
        CategoryOrder::new(order, taxonomy.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_taxonomy_has_31_categories_and_one_room() {
        let t = Taxonomy::default();
        assert_eq!(t.len(), 31);
        assert_eq!(t.room(), CategoryId(0));
        assert!(t.has(t.id("double_bed"), Role::Seat));
        assert!(t.is_boundary(t.id("window")));
    }

    #[test]
    fn rejects_bed_without_seat_role() {
        let text = r#"[{"id":0,"name":"room","roles":["room"]},{"id":1,"name":"bed","roles":["bed"]}]"#;
        assert!(matches!(Taxonomy::from_json(text), Err(TaxonomyError::InconsistentRoles { .. })));
    }

    #[test]
    fn rejects_sparse_ids_and_two_rooms() {
        let sparse = r#"[{"id":0,"name":"room","roles":["room"]},{"id":2,"name":"x","roles":[]}]"#;
        assert!(matches!(Taxonomy::from_json(sparse), Err(TaxonomyError::NonDenseIds { .. })));
        let two = r#"[{"id":0,"name":"room","roles":["room"]},{"id":1,"name":"hall","roles":["room"]}]"#;
        assert!(matches!(Taxonomy::from_json(two), Err(TaxonomyError::RoomCount(2))));
    }

    #[test]
    fn default_order_ranks_every_category() {
        let t = Taxonomy::default();
        let o = CategoryOrder::default_for(&t);
        assert_eq!(o.as_slice().len(), 31);
        assert_eq!(o.rank(t.room()), 0);
        assert!(o.rank(t.id("double_bed")) < o.rank(t.id("table_lamp")));
    }

    #[test]
    fn json_round_trip() {
        let t = Taxonomy::default();
        assert_eq!(Taxonomy::from_json(&t.to_json()).unwrap(), t);
    }
}
