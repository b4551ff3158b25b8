use super::{EnvError, EnvKind, Environment, StepOutcome};
use crate::actions::Action;
use crate::canvas::Screenshot;
use crate::geometry::Point;

/// One fixed screenshot. The first action is recorded and ends the episode.
#[derive(Debug, Clone)]
pub struct StaticEnvironment {
    image: Screenshot,
    url: String,
    predicted: Option<Point>,
    done: bool,
}

impl StaticEnvironment {
    pub fn new(image: Screenshot) -> Self {
        Self {
            image,
            url: String::new(),
            predicted: None,
            done: false,
        }
    }

    pub fn with_url(mut self, url: impl Into<String>) -> Self {
        self.url = url.into();
        self
    }

    pub fn predicted(&self) -> Option<Point> {
        self.predicted
    }
}

impl Environment for StaticEnvironment {
    fn observe(&mut self) -> Result<Screenshot, EnvError> {
        Ok(self.image.clone())
    }

    fn apply(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        action
            .validate()
            .map_err(|e| EnvError::Malformed(e.to_string()))?;
        self.predicted = action.start.or(self.predicted);
        self.done = true;
        Ok(StepOutcome {
            screenshot: self.image.clone(),
            terminated: true,
            info: format!("recorded {action}"),
        })
    }

    fn url(&self) -> String {
        self.url.clone()
    }

    fn kind(&self) -> EnvKind {
        EnvKind::Static
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Dims;

    #[test]
    fn records_and_terminates() {
        let img = Screenshot::solid(Dims::new(5, 5).unwrap(), [1, 2, 3]);
        let mut env = StaticEnvironment::new(img.clone());
        assert_eq!(env.observe().unwrap(), img);
        let out = env.apply(&Action::click(Point::new(2, 3))).unwrap();
        assert!(out.terminated);
        assert_eq!(out.screenshot, img);
        assert_eq!(env.predicted(), Some(Point::new(2, 3)));
        assert_eq!(env.observe().unwrap(), img);
        assert!(env
            .apply(&Action::bare(crate::actions::ActionKind::Click))
            .is_err());
    }
}
