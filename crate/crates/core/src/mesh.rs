//! Cartesian space–time meshes of `Ω × (0, T)` with classified facets and
//! time-slab grouping.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
    Robin,
}

/// Space–time cylinder with a box-shaped spatial domain.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeDomain {
    space_box: Vec<(f64, f64)>,
    final_time: f64,
    /// `[low side, high side]` condition per spatial axis.
    boundary: Vec<[BoundaryCondition; 2]>,
}

impl SpaceTimeDomain {
    /// Domain with Dirichlet conditions on every face.
    pub fn new(space_box: &[(f64, f64)], final_time: f64) -> Result<Self> {
        if !(1..=2).contains(&space_box.len()) {
            return Err(invalid(format!("spatial dimension must be 1 or 2, got {}", space_box.len())));
        }
        for (k, &(a, b)) in space_box.iter().enumerate() {
            if !(b > a) || !a.is_finite() || !b.is_finite() {
                return Err(invalid(format!("axis {k}: need a < b, got ({a}, {b})")));
            }
        }
        if !(final_time > 0.0) || !final_time.is_finite() {
            return Err(invalid(format!("final time must be positive, got {final_time}")));
        }
        Ok(SpaceTimeDomain {
            space_box: space_box.to_vec(),
            final_time,
            boundary: vec![[BoundaryCondition::Dirichlet; 2]; space_box.len()],
        })
    }

    pub fn with_condition(mut self, axis: usize, high_side: bool, bc: BoundaryCondition) -> Result<Self> {
        if axis >= self.dim() {
            return Err(invalid(format!("axis {axis} out of range")));
        }
        self.boundary[axis][high_side as usize] = bc;
        Ok(self)
    }

    pub fn with_all_conditions(mut self, bc: BoundaryCondition) -> Self {
        for sides in &mut self.boundary {
            *sides = [bc; 2];
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.space_box.len()
    }

    pub fn space_box(&self) -> &[(f64, f64)] {
        &self.space_box
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    pub fn condition(&self, axis: usize, high_side: bool) -> BoundaryCondition {
        self.boundary[axis][high_side as usize]
    }

    pub fn has_condition(&self, bc: BoundaryCondition) -> bool {
        self.boundary.iter().flatten().any(|&c| c == bc)
    }
}

#[derive(Clone, Debug)]
pub struct Element {
    pub id: usize,
    pub slab: usize,
    /// Lattice position of the spatial cell.
    pub cell: Vec<usize>,
    /// Space axes followed by the time interval.
    pub bounds: Vec<(f64, f64)>,
    /// Diameter of the spatial cell.
    pub h_x: f64,
    pub h_t: f64,
    pub h_k: f64,
    pub center: Vec<f64>,
}

impl Element {
    pub fn dim(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn measure(&self) -> f64 {
        self.bounds.iter().map(|(a, b)| b - a).product()
    }

    pub fn space_widths(&self) -> Vec<f64> {
        self.bounds[..self.dim()].iter().map(|(a, b)| b - a).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FacetKind {
    SpaceLikeInternal,
    TimeLikeInternal,
    Initial,
    Final,
    Dirichlet,
    Neumann,
    Robin,
}

impl FacetKind {
    pub fn is_boundary_in_space(self) -> bool {
        matches!(self, FacetKind::Dirichlet | FacetKind::Neumann | FacetKind::Robin)
    }

    pub fn is_internal(self) -> bool {
        matches!(self, FacetKind::SpaceLikeInternal | FacetKind::TimeLikeInternal)
    }
}

/// Axis-aligned facet. For space-like internal facets the owner is the
/// element before it in time; for time-like internal facets the owner is the
/// element on the low-coordinate side. `normal` points away from the owner.
#[derive(Clone, Debug)]
pub struct Facet {
    pub id: usize,
    pub kind: FacetKind,
    /// Degenerate along `normal_axis`.
    pub bounds: Vec<(f64, f64)>,
    pub normal_axis: usize,
    pub normal: Vec<f64>,
    pub owner: usize,
    pub neighbor: Option<usize>,
    pub h_fx: f64,
}

impl Facet {
    pub fn measure(&self) -> f64 {
        self.bounds
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != self.normal_axis)
            .map(|(_, (a, b))| b - a)
            .product()
    }

    /// Outward normal sign (+1 / −1) of `element` on this facet along the
    /// normal axis, or `None` if the element is not adjacent.
    pub fn orientation(&self, element: usize) -> Option<f64> {
        let s = self.normal[self.normal_axis];
        if element == self.owner {
            Some(s)
        } else if self.neighbor == Some(element) {
            Some(-s)
        } else {
            None
        }
    }
}

/// Per-slab grouping of elements and facets.
#[derive(Clone, Debug)]
pub struct SlabIndex {
    pub boundaries: Vec<f64>,
    pub elements: Vec<Vec<usize>>,
    /// Time-like internal and spatial boundary facets of each slab.
    pub lateral_facets: Vec<Vec<usize>>,
    /// Facets at the bottom of each slab: initial facets for the first slab,
    /// space-like internal facets shared with the previous slab otherwise.
    pub bottom_facets: Vec<Vec<usize>>,
    /// Final-time facets (top of the last slab).
    pub final_facets: Vec<usize>,
}

impl SlabIndex {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct SpaceTimeMesh {
    domain: SpaceTimeDomain,
    space_nodes: Vec<Vec<f64>>,
    time_nodes: Vec<f64>,
    elements: Vec<Element>,
    facets: Vec<Facet>,
    element_facets: Vec<Vec<usize>>,
    slabs: SlabIndex,
}

/// Uniform mesh with `cells_per_axis[k]` spatial cells on axis `k` and
/// `time_slabs` slabs.
pub fn build_cartesian_mesh(
    domain: &SpaceTimeDomain,
    cells_per_axis: &[usize],
    time_slabs: usize,
) -> Result<SpaceTimeMesh> {
    if cells_per_axis.len() != domain.dim() {
        return Err(invalid(format!(
            "expected {} cell counts, got {}",
            domain.dim(),
            cells_per_axis.len()
        )));
    }
    if cells_per_axis.contains(&0) || time_slabs == 0 {
        return Err(invalid("cell and slab counts must be at least 1"));
    }
    let space_nodes = domain
        .space_box()
        .iter()
        .zip(cells_per_axis)
        .map(|(&(a, b), &n)| uniform_nodes(a, b, n))
        .collect();
    let time_nodes = uniform_nodes(0.0, domain.final_time(), time_slabs);
    build_cartesian_mesh_from_nodes(domain, space_nodes, time_nodes)
}

/// `n + 1` equispaced nodes with exact end points.
pub fn uniform_nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| if i == n { b } else { a + (b - a) * i as f64 / n as f64 })
        .collect()
}

/// Uniform-per-piece nodes on `[a, b]` that contain every breakpoint; each
/// piece between consecutive breakpoints gets cells no wider than `h`.
pub fn nodes_with_breakpoints(a: f64, b: f64, h: f64, breakpoints: &[f64]) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(invalid("cell width must be positive"));
    }
    let mut cuts = vec![a];
    let mut sorted: Vec<f64> = breakpoints.iter().copied().filter(|&x| x > a && x < b).collect();
    sorted.sort_by(f64::total_cmp);
    cuts.extend(sorted);
    cuts.push(b);
    let mut nodes = vec![a];
    for w in cuts.windows(2) {
        let n = ((w[1] - w[0]) / h - 1e-9).ceil().max(1.0) as usize;
        nodes.extend(uniform_nodes(w[0], w[1], n).into_iter().skip(1));
    }
    Ok(nodes)
}

/// Tensor mesh through the given per-axis node lists.
pub fn build_cartesian_mesh_from_nodes(
    domain: &SpaceTimeDomain,
    space_nodes: Vec<Vec<f64>>,
    time_nodes: Vec<f64>,
) -> Result<SpaceTimeMesh> {
    let d = domain.dim();
    if space_nodes.len() != d {
        return Err(invalid(format!("expected {d} node lists, got {}", space_nodes.len())));
    }
    let check = |nodes: &[f64], a: f64, b: f64, what: &str| -> Result<()> {
        if nodes.len() < 2 {
            return Err(invalid(format!("{what}: need at least one cell")));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid(format!("{what}: nodes must be strictly increasing")));
        }
        if nodes[0] != a || *nodes.last().unwrap() != b {
            return Err(invalid(format!("{what}: nodes must span [{a}, {b}]")));
        }
        Ok(())
    };
    for (k, nodes) in space_nodes.iter().enumerate() {
        let (a, b) = domain.space_box()[k];
        check(nodes, a, b, &format!("axis {k}"))?;
    }
    check(&time_nodes, 0.0, domain.final_time(), "time axis")?;

    let ncells: Vec<usize> = space_nodes.iter().map(|n| n.len() - 1).collect();
    let cells_per_slab: usize = ncells.iter().product();
    let nslabs = time_nodes.len() - 1;

    let cell_of = |linear: usize| -> Vec<usize> {
        let mut rem = linear;
        ncells
            .iter()
            .map(|&n| {
                let i = rem % n;
                rem /= n;
                i
            })
            .collect()
    };
    let linear_of = |cell: &[usize]| -> usize {
        cell.iter().zip(&ncells).rev().fold(0, |acc, (&i, &n)| acc * n + i)
    };

    let mut elements = Vec::with_capacity(cells_per_slab * nslabs);
    for slab in 0..nslabs {
        for linear in 0..cells_per_slab {
            let cell = cell_of(linear);
            let mut bounds: Vec<(f64, f64)> =
                cell.iter().enumerate().map(|(k, &i)| (space_nodes[k][i], space_nodes[k][i + 1])).collect();
            bounds.push((time_nodes[slab], time_nodes[slab + 1]));
            let h_x = bounds[..d].iter().map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
            let h_t = bounds[d].1 - bounds[d].0;
            let center = bounds.iter().map(|(a, b)| 0.5 * (a + b)).collect();
            elements.push(Element {
                id: elements.len(),
                slab,
                cell,
                bounds,
                h_x,
                h_t,
                h_k: (h_x * h_x + h_t * h_t).sqrt(),
                center,
            });
        }
    }

    let mut facets: Vec<Facet> = Vec::new();
    let mut element_facets = vec![Vec::new(); elements.len()];
    let mut lateral = vec![Vec::new(); nslabs];
    let mut bottom = vec![Vec::new(); nslabs];
    let mut final_facets = Vec::new();
    let mut push = |facets: &mut Vec<Facet>, mut f: Facet| -> usize {
        f.id = facets.len();
        element_facets[f.owner].push(f.id);
        if let Some(nb) = f.neighbor {
            element_facets[nb].push(f.id);
        }
        facets.push(f);
        facets.len() - 1
    };
    let unit = |axis: usize, sign: f64| -> Vec<f64> {
        let mut n = vec![0.0; d + 1];
        n[axis] = sign;
        n
    };

    for slab in 0..nslabs {
        // Bottom of the slab.
        for linear in 0..cells_per_slab {
            let e = slab * cells_per_slab + linear;
            let mut bounds = elements[e].bounds.clone();
            bounds[d] = (time_nodes[slab], time_nodes[slab]);
            let h_fx = elements[e].h_x;
            let id = if slab == 0 {
                push(
                    &mut facets,
                    Facet {
                        id: 0,
                        kind: FacetKind::Initial,
                        bounds,
                        normal_axis: d,
                        normal: unit(d, -1.0),
                        owner: e,
                        neighbor: None,
                        h_fx,
                    },
                )
            } else {
                push(
                    &mut facets,
                    Facet {
                        id: 0,
                        kind: FacetKind::SpaceLikeInternal,
                        bounds,
                        normal_axis: d,
                        normal: unit(d, 1.0),
                        owner: e - cells_per_slab,
                        neighbor: Some(e),
                        h_fx,
                    },
                )
            };
            bottom[slab].push(id);
        }
        // Time-like facets, axis by axis, in lattice order.
        for axis in 0..d {
            for linear in 0..cells_per_slab {
                let e = slab * cells_per_slab + linear;
                let cell = elements[e].cell.clone();
                let i = cell[axis];
                let mut bounds = elements[e].bounds.clone();
                let x_lo = space_nodes[axis][i];
                if i == 0 {
                    bounds[axis] = (x_lo, x_lo);
                    let id = push(&mut facets, boundary_facet(domain, axis, false, bounds, e, &elements, unit(axis, -1.0)));
                    lateral[slab].push(id);
                }
                let x_hi = space_nodes[axis][i + 1];
                let mut bounds = elements[e].bounds.clone();
                bounds[axis] = (x_hi, x_hi);
                let id = if i + 1 == ncells[axis] {
                    push(&mut facets, boundary_facet(domain, axis, true, bounds, e, &elements, unit(axis, 1.0)))
                } else {
                    let mut nc = cell.clone();
                    nc[axis] += 1;
                    let nb = slab * cells_per_slab + linear_of(&nc);
                    push(
                        &mut facets,
                        Facet {
                            id: 0,
                            kind: FacetKind::TimeLikeInternal,
                            bounds,
                            normal_axis: axis,
                            normal: unit(axis, 1.0),
                            owner: e,
                            neighbor: Some(nb),
                            h_fx: elements[e].h_x.min(elements[nb].h_x),
                        },
                    )
                };
                lateral[slab].push(id);
            }
        }
    }
    for linear in 0..cells_per_slab {
        let e = (nslabs - 1) * cells_per_slab + linear;
        let mut bounds = elements[e].bounds.clone();
        let t = domain.final_time();
        bounds[d] = (t, t);
        let id = push(
            &mut facets,
            Facet {
                id: 0,
                kind: FacetKind::Final,
                bounds,
                normal_axis: d,
                normal: unit(d, 1.0),
                owner: e,
                neighbor: None,
                h_fx: elements[e].h_x,
            },
        );
        final_facets.push(id);
    }

    let slab_elements = (0..nslabs)
        .map(|s| (s * cells_per_slab..(s + 1) * cells_per_slab).collect())
        .collect();
    Ok(SpaceTimeMesh {
        domain: domain.clone(),
        space_nodes,
        time_nodes: time_nodes.clone(),
        elements,
        facets,
        element_facets,
        slabs: SlabIndex {
            boundaries: time_nodes,
            elements: slab_elements,
            lateral_facets: lateral,
            bottom_facets: bottom,
            final_facets,
        },
    })
}

fn boundary_facet(
    domain: &SpaceTimeDomain,
    axis: usize,
    high: bool,
    bounds: Vec<(f64, f64)>,
    e: usize,
    elements: &[Element],
    normal: Vec<f64>,
) -> Facet {
    let kind = match domain.condition(axis, high) {
        BoundaryCondition::Dirichlet => FacetKind::Dirichlet,
        BoundaryCondition::Neumann => FacetKind::Neumann,
        BoundaryCondition::Robin => FacetKind::Robin,
    };
    Facet { id: 0, kind, bounds, normal_axis: axis, normal, owner: e, neighbor: None, h_fx: elements[e].h_x }
}

impl SpaceTimeMesh {
    pub fn domain(&self) -> &SpaceTimeDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, id: usize) -> &Element {
        &self.elements[id]
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn facet(&self, id: usize) -> &Facet {
        &self.facets[id]
    }

    pub fn slabs(&self) -> &SlabIndex {
        &self.slabs
    }

    pub fn space_nodes(&self) -> &[Vec<f64>] {
        &self.space_nodes
    }

    pub fn time_nodes(&self) -> &[f64] {
        &self.time_nodes
    }

    pub fn cells_per_slab(&self) -> usize {
        self.slabs.elements[0].len()
    }

    pub fn cells_per_axis(&self) -> Vec<usize> {
        self.space_nodes.iter().map(|n| n.len() - 1).collect()
    }

    /// Largest spatial cell width along any axis.
    pub fn max_space_width(&self) -> f64 {
        self.space_nodes
            .iter()
            .flat_map(|n| n.windows(2).map(|w| w[1] - w[0]))
            .fold(0.0, f64::max)
    }

    /// Element containing `point` (space coordinates, then time). Points on
    /// an interior node belong to the later cell.
    pub fn locate(&self, point: &[f64]) -> Option<usize> {
        if point.len() != self.dim() + 1 {
            return None;
        }
        let index = |nodes: &[f64], x: f64| -> Option<usize> {
            let n = nodes.len() - 1;
            if !(x >= nodes[0] && x <= nodes[n]) {
                return None;
            }
            Some((nodes.partition_point(|&v| v <= x) - 1).min(n - 1))
        };
        let slab = index(&self.time_nodes, point[self.dim()])?;
        let mut linear = 0;
        for k in (0..self.dim()).rev() {
            let nodes = &self.space_nodes[k];
            linear = linear * (nodes.len() - 1) + index(nodes, point[k])?;
        }
        Some(slab * self.cells_per_slab() + linear)
    }

    pub fn max_h_k(&self) -> f64 {
        self.elements.iter().map(|e| e.h_k).fold(0.0, f64::max)
    }

    /// Whether all slabs have the same length to 1e-12 relative.
    pub fn uniform_slabs(&self) -> bool {
        let t = &self.time_nodes;
        let h0 = t[1] - t[0];
        t.windows(2).all(|w| ((w[1] - w[0]) - h0).abs() <= 1e-12 * h0)
    }

    /// Whether `x` is a node of spatial axis `axis` (to 1e-12).
    pub fn is_aligned(&self, axis: usize, x: f64) -> bool {
        self.space_nodes[axis].iter().any(|&n| (n - x).abs() <= 1e-12 * (1.0 + x.abs()))
    }

    /// Facets adjacent to `element`, each with the element's outward normal
    /// sign along the facet's normal axis.
    pub fn facets_of(&self, element: usize) -> Result<Vec<(&Facet, f64)>> {
        let ids = self
            .element_facets
            .get(element)
            .ok_or_else(|| invalid(format!("unknown element id {element}")))?;
        Ok(ids
            .iter()
            .map(|&f| {
                let facet = &self.facets[f];
                (facet, facet.orientation(element).expect("adjacency is consistent"))
            })
            .collect())
    }
}
