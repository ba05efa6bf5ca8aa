//! Cloud-to-image mappers behind one enum.

use serde::{Deserialize, Serialize};

use crate::graphdraw::graph_draw;
use crate::project::{basic_project, basic_project_leaky, BASIC_SIZE};
use crate::render::render_input;
use crate::{Error, GradPath, GraphDrawConfig, MappedImage, PointCloud, Result, ZBufferConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mapper {
    BasicProject { size: usize },
    BasicProjectLeaky { size: usize },
    #[serde(rename = "graphdraw")]
    GraphDraw(GraphDrawConfig),
    /// Depth map plus two positional-embedding channels.
    #[serde(rename = "zbuffer")]
    ZBuffer(ZBufferConfig),
}

impl Mapper {
    pub const NAMES: [&'static str; 4] = ["basic_project", "basic_project_leaky", "graphdraw", "zbuffer"];

    /// Default configuration for a pipeline name.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "basic_project" => Mapper::BasicProject { size: BASIC_SIZE },
            "basic_project_leaky" => Mapper::BasicProjectLeaky { size: BASIC_SIZE },
            "graphdraw" => Mapper::GraphDraw(GraphDrawConfig::default()),
            "zbuffer" => Mapper::ZBuffer(ZBufferConfig::default()),
            other => {
                return Err(Error::Config(format!(
                    "unknown pipeline `{other}` (expected one of {})",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mapper::BasicProject { .. } => "basic_project",
            Mapper::BasicProjectLeaky { .. } => "basic_project_leaky",
            Mapper::GraphDraw(_) => "graphdraw",
            Mapper::ZBuffer(_) => "zbuffer",
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            Mapper::BasicProject { .. } => 1,
            _ => 3,
        }
    }

    pub fn grad_path(&self) -> GradPath {
        match self {
            Mapper::BasicProject { .. } | Mapper::ZBuffer(_) => GradPath::Blocked,
            Mapper::BasicProjectLeaky { .. } | Mapper::GraphDraw(_) => GradPath::CoordinateLeak,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Mapper::BasicProject { size } | Mapper::BasicProjectLeaky { size } if *size == 0 => {
                Err(Error::Config("image size must be positive".into()))
            }
            Mapper::GraphDraw(g) if g.clusters == 0 || g.grid == 0 || !(g.alpha >= 1.0) => {
                Err(Error::Config("graphdraw needs clusters, grid > 0 and alpha >= 1".into()))
            }
            Mapper::ZBuffer(z) => z.validate(),
            _ => Ok(()),
        }
    }

    pub fn map(&self, cloud: &PointCloud) -> Result<MappedImage> {
        match self {
            Mapper::BasicProject { size } => basic_project(cloud, *size),
            Mapper::BasicProjectLeaky { size } => basic_project_leaky(cloud, *size),
            Mapper::GraphDraw(cfg) => graph_draw(cloud, cfg),
            Mapper::ZBuffer(cfg) => render_input(cloud, cfg),
        }
    }
}
