//! Euclidean projection and tangent-cone projection on the built-in set
//! kinds: a triangle, a disk, a box and a box ∩ disk intersection.

use awpds::sets::ConvexSet;
use nalgebra::{dvector, DVector};

fn show(name: &str, set: &ConvexSet, points: &[DVector<f64>], dir: &DVector<f64>) -> Result<(), Box<dyn std::error::Error>> {
    println!("{name}");
    for z in points {
        let p = set.project(z)?;
        let t = set.tangent_project(&p, dir)?;
        println!(
            "  P({:>5.2}, {:>5.2}) = ({:>7.4}, {:>7.4})  dist {:.4}   Π(P, v) = ({:>7.4}, {:>7.4})  β = {:.4}  {:?}, {} active",
            z[0],
            z[1],
            p[0],
            p[1],
            set.distance(z)?,
            t.projected[0],
            t.projected[1],
            t.beta,
            t.location,
            t.active_normals.len()
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // x ≥ 0, y ≥ 0, x + y ≤ 1
    let triangle = ConvexSet::polyhedron(vec![
        (dvector![-1.0, 0.0], 0.0),
        (dvector![0.0, -1.0], 0.0),
        (dvector![1.0, 1.0], 1.0),
    ])?;
    let disk = ConvexSet::ball(dvector![0.0, 0.0], 1.0)?;
    let square = ConvexSet::axis_box(dvector![-0.8, -0.8], dvector![0.8, 0.8])?;
    let rounded = ConvexSet::intersection(vec![square.clone(), disk.clone()])?;

    let points = [
        dvector![2.0, 2.0],
        dvector![-1.0, 0.3],
        dvector![0.2, 0.2],
        dvector![3.0, -0.5],
    ];
    let v = dvector![1.0, 0.5];
    println!("direction v = ({}, {})\n", v[0], v[1]);
    show("triangle", &triangle, &points, &v)?;
    show("unit disk", &disk, &points, &v)?;
    show("box [-0.8, 0.8]²", &square, &points, &v)?;
    show("box ∩ disk", &rounded, &points, &v)?;

    if let Some(vs) = triangle.vertices() {
        let list: Vec<String> = vs.iter().map(|p| format!("({}, {})", p[0], p[1])).collect();
        println!("\ntriangle vertices: {}", list.join(" "));
    }
    println!("diameter of box ∩ disk: {:.4}", rounded.diameter());
    Ok(())
}
